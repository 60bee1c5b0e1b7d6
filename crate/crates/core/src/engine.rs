//! The subgroup-separation estimator and a uniform front door over all
//! marginal-likelihood methods.
//!
//! `P(X_e) = P(X_{e'}) · Π_i P(X_{e_ch,i} | X_{e_mb,i \ e_ch,i})`. Each factor is
//! computed independently: small subsets by junction tree, the rest by
//! importance sampling with a loopy-BP proposal.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{
    gibbs_estimate, importance_estimate, lbp_is_estimate, loopy_bp, ImportanceEstimate,
    SamplerConfig,
};
use crate::decomposition::{decompose, relevant_nodes};
use crate::error::InferenceError;
use crate::exact::{jt_log_marginal, subset_log_marginal_exact, DEFAULT_TABLE_CAP};
use crate::graph::{NodeId, NodeSet};
use crate::model::{CategoricalBN, Evidence, DEFAULT_ENUMERATION_BITS};
use crate::numeric::derive_seed;

pub const DEFAULT_N_MAX: usize = 15;
pub const DEFAULT_BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMethod {
    Exact,
    Approx,
}

impl fmt::Display for SubsetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetMethod::Exact => "exact",
            SubsetMethod::Approx => "approx",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgsConfig {
    /// Subsets with fewer nodes than this are solved exactly.
    pub n_max: usize,
    pub sampler: SamplerConfig,
    /// Forces the method of each subset, in decomposition order.
    pub method_override: Option<Vec<SubsetMethod>>,
    /// Largest clique table the junction tree may allocate.
    pub table_cap: usize,
    /// Discarded Gibbs sweeps for the GS baseline.
    pub burn_in: usize,
    /// Largest free configuration count (log2) the enumeration oracle accepts.
    pub enumeration_bits: f64,
}

impl Default for SgsConfig {
    fn default() -> Self {
        SgsConfig {
            n_max: DEFAULT_N_MAX,
            sampler: SamplerConfig::default(),
            method_override: None,
            table_cap: DEFAULT_TABLE_CAP,
            burn_in: DEFAULT_BURN_IN,
            enumeration_bits: DEFAULT_ENUMERATION_BITS,
        }
    }
}

impl SgsConfig {
    /// Every subset exact (unless a clique exceeds the table cap).
    pub fn all_exact() -> Self {
        SgsConfig {
            n_max: usize::MAX,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sgs")]
    Sgs,
    #[serde(rename = "jt")]
    JtFull,
    #[serde(rename = "lbp-is")]
    LbpIs,
    #[serde(rename = "gs")]
    Gs,
    #[serde(rename = "enum")]
    Enum,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sgs, Method::JtFull, Method::LbpIs, Method::Gs, Method::Enum];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sgs => "sgs",
            Method::JtFull => "jt",
            Method::LbpIs => "lbp-is",
            Method::Gs => "gs",
            Method::Enum => "enum",
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Method::JtFull | Method::Enum)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgs" => Ok(Method::Sgs),
            "jt" | "jt_full" | "jt-full" => Ok(Method::JtFull),
            "lbp-is" | "lbp_is" => Ok(Method::LbpIs),
            "gs" => Ok(Method::Gs),
            "enum" => Ok(Method::Enum),
            _ => Err(format!("unknown method '{s}' (expected sgs, jt, lbp-is, gs or enum)")),
        }
    }
}

/// How one factor of the estimate was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetReport {
    pub subset: NodeSet,
    pub method: SubsetMethod,
    pub log_factor: f64,
    /// Importance samples drawn (0 for exact factors).
    pub samples: usize,
    /// Weight variance over squared mean weight (0 for exact factors).
    pub relative_weight_variance: f64,
    pub lbp_iterations: usize,
    /// Planned as exact but the clique tables exceeded the cap.
    pub fell_back: bool,
}

impl SubsetReport {
    fn exact(subset: NodeSet, log_factor: f64) -> Self {
        SubsetReport {
            subset,
            method: SubsetMethod::Exact,
            log_factor,
            samples: 0,
            relative_weight_variance: 0.0,
            lbp_iterations: 0,
            fell_back: false,
        }
    }

    fn sampled(subset: NodeSet, est: &ImportanceEstimate, lbp_iterations: usize) -> Self {
        SubsetReport {
            subset,
            method: SubsetMethod::Approx,
            log_factor: est.log_estimate,
            samples: est.samples,
            relative_weight_variance: est.relative_weight_variance,
            lbp_iterations,
            fell_back: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalEstimate {
    pub method: Method,
    /// `log P(X_e)`.
    pub log_value: f64,
    pub per_subset: Vec<SubsetReport>,
    /// `log P(X_{e'})` for the evidence whose parents are all evidence.
    pub leftover_factor: f64,
    /// Distinct variables that were sampled rather than summed out.
    pub sampled_variables: usize,
}

impl MarginalEstimate {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    /// Estimated variance of the estimate over its squared value, from the
    /// per-factor weight variances (0 when everything was exact).
    pub fn relative_variance(&self) -> f64 {
        self.per_subset
            .iter()
            .filter(|r| r.samples > 0)
            .map(|r| 1.0 + r.relative_weight_variance / r.samples as f64)
            .product::<f64>()
            - 1.0
    }

    fn single(method: Method, subset: NodeSet, report: SubsetReport) -> Self {
        let sampled = if report.method == SubsetMethod::Approx { subset.len() } else { 0 };
        MarginalEstimate {
            method,
            log_value: report.log_factor,
            per_subset: vec![report],
            leftover_factor: 0.0,
            sampled_variables: sampled,
        }
    }
}

/// `Σ_{v ∈ e'} log P(x_v | x_pa(v))`, every family fully observed.
pub fn evidence_only_factor(
    bn: &CategoricalBN,
    e_prime: &NodeSet,
    e: &Evidence,
) -> Result<f64, InferenceError> {
    let mut total = 0.0;
    for &v in e_prime {
        if !e.contains(v) {
            return Err(InferenceError::Internal(format!("leftover node {v} is not evidence")));
        }
        if let Some(p) = bn.dag().parents(v).iter().find(|p| !e.contains(**p)) {
            return Err(InferenceError::Internal(format!(
                "leftover node {v} has unobserved parent {p}"
            )));
        }
        total += bn.prob_with(v, |u| e.get(u).unwrap()).ln();
    }
    Ok(total)
}

/// Samples per approximate subset: the budget `M` per free variable is pooled
/// over all free relevant variables and shared out in proportion to subset
/// size, so each sampled subset gets at least `M` draws.
fn samples_per_subset(budget: usize, free: usize, approx_free: usize) -> usize {
    if approx_free == 0 {
        return 0;
    }
    let total = budget as u128 * free as u128;
    ((total / approx_free as u128) as usize).max(1)
}

pub fn marginal_sgs(
    bn: &CategoricalBN,
    e: &Evidence,
    cfg: &SgsConfig,
) -> Result<MarginalEstimate, InferenceError> {
    let d = decompose(bn, e)?;
    let leftover_factor = evidence_only_factor(bn, &d.leftover_evidence, e)?;

    let planned: Vec<SubsetMethod> = match &cfg.method_override {
        Some(m) if m.len() != d.subsets.len() => {
            return Err(InferenceError::Argument(format!(
                "method override lists {} subsets, decomposition has {}",
                m.len(),
                d.subsets.len()
            )))
        }
        Some(m) => m.clone(),
        None => d
            .subsets
            .iter()
            .map(|s| if s.len() < cfg.n_max { SubsetMethod::Exact } else { SubsetMethod::Approx })
            .collect(),
    };
    if planned.contains(&SubsetMethod::Approx) {
        cfg.sampler.check()?;
    }

    let exact: Vec<Option<Result<f64, InferenceError>>> = (0..d.subsets.len())
        .into_par_iter()
        .map(|i| {
            (planned[i] == SubsetMethod::Exact).then(|| {
                subset_log_marginal_exact(bn, &d.subsets[i], &d.boundaries[i], e, cfg.table_cap)
            })
        })
        .collect();
    let mut reports: Vec<Option<SubsetReport>> = vec![None; d.subsets.len()];
    let mut fell_back = vec![false; d.subsets.len()];
    for (i, r) in exact.into_iter().enumerate() {
        match r {
            Some(Ok(lv)) => reports[i] = Some(SubsetReport::exact(d.subsets[i].clone(), lv)),
            Some(Err(err)) if err.is_capacity() => {
                cfg.sampler.check()?;
                fell_back[i] = true;
            }
            Some(Err(err)) => return Err(err),
            None => {}
        }
    }

    let approx: Vec<usize> = (0..d.subsets.len()).filter(|&i| reports[i].is_none()).collect();
    let approx_free: usize = approx.iter().map(|&i| d.subsets[i].len()).sum();
    let per_subset = samples_per_subset(cfg.sampler.samples, d.free_count(), approx_free);
    let sampled: Vec<Result<SubsetReport, InferenceError>> = approx
        .par_iter()
        .map(|&i| {
            let (s, b) = (&d.subsets[i], &d.boundaries[i]);
            let sub_cfg = SamplerConfig {
                samples: per_subset,
                seed: derive_seed(cfg.sampler.seed, i as u64),
                ..cfg.sampler.clone()
            };
            let targets: NodeSet = s.union(&b.e_ch).copied().collect();
            let q = loopy_bp(bn, &targets, e, &sub_cfg);
            let est = importance_estimate(bn, s, b, e, &q, &sub_cfg)?;
            let mut report = SubsetReport::sampled(s.clone(), &est, q.iterations);
            report.fell_back = fell_back[i];
            Ok(report)
        })
        .collect();
    for (&i, r) in approx.iter().zip(sampled) {
        reports[i] = Some(r?);
    }

    let per_subset: Vec<SubsetReport> = reports.into_iter().map(Option::unwrap).collect();
    let log_value = per_subset.iter().fold(leftover_factor, |acc, r| acc + r.log_factor);
    Ok(MarginalEstimate {
        method: Method::Sgs,
        log_value,
        per_subset,
        leftover_factor,
        sampled_variables: approx_free,
    })
}

fn free_relevant(bn: &CategoricalBN, e: &Evidence) -> NodeSet {
    relevant_nodes(bn.dag(), &e.nodes())
        .into_iter()
        .filter(|&v| !e.contains(v))
        .collect()
}

pub fn marginal(
    bn: &CategoricalBN,
    e: &Evidence,
    method: Method,
    cfg: &SgsConfig,
) -> Result<MarginalEstimate, InferenceError> {
    match method {
        Method::Sgs => marginal_sgs(bn, e, cfg),
        Method::JtFull => {
            let lv = jt_log_marginal(bn, e, cfg.table_cap)?;
            let free = free_relevant(bn, e);
            Ok(MarginalEstimate::single(method, free.clone(), SubsetReport::exact(free, lv)))
        }
        Method::Enum => {
            let lv = bn.enumerate_log_marginal(e, cfg.enumeration_bits)?;
            let free: NodeSet = bn.dag().nodes().filter(|&v| !e.contains(v)).collect::<NodeSet>();
            Ok(MarginalEstimate::single(method, free.clone(), SubsetReport::exact(free, lv)))
        }
        Method::LbpIs | Method::Gs => {
            let est = if method == Method::LbpIs {
                lbp_is_estimate(bn, e, &cfg.sampler)?
            } else {
                gibbs_estimate(bn, e, &cfg.sampler, cfg.burn_in)?
            };
            let free = free_relevant(bn, e);
            let report = if est.samples == 0 {
                SubsetReport::exact(free.clone(), est.log_estimate)
            } else {
                SubsetReport::sampled(free.clone(), &est, 0)
            };
            Ok(MarginalEstimate::single(method, free, report))
        }
    }
}

/// Names of the nodes in `set`, comma separated.
pub fn node_names(bn: &CategoricalBN, set: &NodeSet) -> String {
    set.iter()
        .map(|&v: &NodeId| bn.name(v))
        .collect::<Vec<_>>()
        .join(",")
}
