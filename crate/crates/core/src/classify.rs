//! Classifying incomplete records against candidate networks by marginal
//! likelihood, plus ROC analysis and a synthetic comparison of
//! marginalizing missing variables versus dropping them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bench::{gen_dag, BenchError, Family, GenSpec};
use crate::engine::{marginal_sgs, SgsConfig};
use crate::error::InferenceError;
use crate::exact::jt_log_marginal;
use crate::graph::{Dag, NodeId, NodeSet};
use crate::io::{Dataset, ErrorKind, FormatError};
use crate::model::{CategoricalBN, Evidence};
use crate::numeric::{derive_seed, log_sum_exp};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("need at least two candidate models, got {0}")]
    TooFewModels(usize),
    #[error("record has no observed variable known to model {model}")]
    NoEvidence { model: usize },
    #[error("record {record}: {source}")]
    Record { record: usize, source: Box<ClassifyError> },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Domain(String),
}

/// Observed states by variable name, and the names known to be missing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialRecord {
    pub observed: BTreeMap<String, String>,
    pub missing: BTreeSet<String>,
}

impl PartialRecord {
    pub fn new(observed: BTreeMap<String, String>, missing: BTreeSet<String>) -> Result<Self, ClassifyError> {
        if let Some(name) = missing.iter().find(|m| observed.contains_key(*m)) {
            return Err(ClassifyError::Domain(format!("'{name}' is both observed and missing")));
        }
        Ok(PartialRecord { observed, missing })
    }

    /// Row `r` of a dataset, ignoring column `exclude` (typically the label).
    pub fn from_dataset(data: &Dataset, r: usize, exclude: Option<usize>) -> Self {
        let observed = data.observed(r, exclude);
        let missing = data.rows[r]
            .iter()
            .enumerate()
            .filter(|(c, cell)| Some(*c) != exclude && cell.is_none())
            .map(|(c, _)| data.columns[c].clone())
            .collect();
        PartialRecord { observed, missing }
    }

    /// Evidence for `bn` from the observed variables it knows. Returns the
    /// names it had to ignore alongside.
    pub fn evidence_for(&self, bn: &CategoricalBN) -> Result<(Evidence, Vec<String>), FormatError> {
        let mut e = Evidence::new();
        let mut ignored = Vec::new();
        for (name, state) in &self.observed {
            let Some(v) = bn.node_by_name(name) else {
                ignored.push(name.clone());
                continue;
            };
            let s = bn.state_by_name(v, state).ok_or_else(|| {
                FormatError::new(ErrorKind::UnknownState, format!("variable '{name}' has no state '{state}'"))
            })?;
            e.insert(v, s);
        }
        Ok((e, ignored))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    /// `log P(X_e | B_i)` per model.
    pub log_likelihoods: Vec<f64>,
    /// Uniform model prior.
    pub posteriors: Vec<f64>,
    /// Index of the best model; the earliest on ties.
    pub predicted: usize,
    pub tie: bool,
    /// Observed variables each model did not know.
    pub ignored: Vec<Vec<String>>,
}

impl ClassificationResult {
    pub fn from_log_likelihoods(log_likelihoods: Vec<f64>, ignored: Vec<Vec<String>>) -> Result<Self, ClassifyError> {
        let total = log_sum_exp(&log_likelihoods);
        if total == f64::NEG_INFINITY {
            return Err(ClassifyError::Domain("record has zero likelihood under every model".into()));
        }
        let posteriors: Vec<f64> = log_likelihoods.iter().map(|l| (l - total).exp()).collect();
        let best = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let predicted = log_likelihoods.iter().position(|&l| l == best).unwrap();
        let tie = log_likelihoods.iter().filter(|&&l| l == best).count() > 1;
        Ok(ClassificationResult {
            log_likelihoods,
            posteriors,
            predicted,
            tie,
            ignored,
        })
    }
}

pub fn classify(
    record: &PartialRecord,
    models: &[CategoricalBN],
    cfg: &SgsConfig,
) -> Result<ClassificationResult, ClassifyError> {
    if models.len() < 2 {
        return Err(ClassifyError::TooFewModels(models.len()));
    }
    let mut logs = Vec::with_capacity(models.len());
    let mut ignored = Vec::with_capacity(models.len());
    for (i, bn) in models.iter().enumerate() {
        let (e, skipped) = record.evidence_for(bn)?;
        if e.is_empty() {
            return Err(ClassifyError::NoEvidence { model: i });
        }
        logs.push(marginal_sgs(bn, &e, cfg)?.log_value);
        ignored.push(skipped);
    }
    ClassificationResult::from_log_likelihoods(logs, ignored)
}

/// Classification with models that only contain observed variables, so every
/// likelihood is a complete-data joint.
pub fn classify_drop_missing(
    record: &PartialRecord,
    models_reduced: &[CategoricalBN],
    cfg: &SgsConfig,
) -> Result<ClassificationResult, ClassifyError> {
    for (i, bn) in models_reduced.iter().enumerate() {
        if let Some(name) = bn.names().iter().find(|n| !record.observed.contains_key(*n)) {
            return Err(ClassifyError::Domain(format!(
                "reduced model {i} contains '{name}', which the record does not observe"
            )));
        }
    }
    classify(record, models_reduced, cfg)
}

/// The network over `keep` (by name) with each CPT replaced by
/// `P(X_v | X_{pa(v) ∩ keep})` under `bn`. Edges through dropped variables
/// are lost, so this is the model one would fit without the dropped data.
pub fn reduce_model(bn: &CategoricalBN, keep: &BTreeSet<String>) -> Result<CategoricalBN, ClassifyError> {
    let mut kept: Vec<NodeId> = Vec::new();
    for name in keep {
        let v = bn.node_by_name(name).ok_or_else(|| {
            ClassifyError::Format(FormatError::new(ErrorKind::UnknownVariable, format!("no variable named '{name}'")))
        })?;
        kept.push(v);
    }
    kept.sort_unstable();
    let new_id = |v: NodeId| kept.binary_search(&v).ok();
    let mut edges = Vec::new();
    let mut tables = Vec::with_capacity(kept.len());
    for (i, &v) in kept.iter().enumerate() {
        let retained: Vec<NodeId> = bn.dag().parents(v).iter().copied().filter(|&p| new_id(p).is_some()).collect();
        edges.extend(retained.iter().map(|&p| (new_id(p).unwrap(), i)));
        let card = bn.cardinality(v);
        if retained.len() == bn.dag().parents(v).len() {
            tables.push(bn.cpt(v).table().to_vec());
            continue;
        }
        let cards: Vec<usize> = retained.iter().map(|&p| bn.cardinality(p)).collect();
        let rows: usize = cards.iter().product();
        let mut table = Vec::with_capacity(rows * card);
        for r in 0..rows {
            let mut e = Evidence::new();
            let mut rem = r;
            for (k, &p) in retained.iter().enumerate().rev() {
                e.insert(p, rem % cards[k]);
                rem /= cards[k];
            }
            let mut joint = Vec::with_capacity(card);
            for s in 0..card {
                let mut es = e.clone();
                es.insert(v, s);
                joint.push(jt_log_marginal(bn, &es, crate::exact::DEFAULT_TABLE_CAP)?);
            }
            let total = log_sum_exp(&joint);
            if total == f64::NEG_INFINITY {
                table.extend(std::iter::repeat_n(1.0 / card as f64, card));
            } else {
                table.extend(joint.iter().map(|l| (l - total).exp()));
            }
        }
        tables.push(table);
    }
    let dag = Dag::new(kept.len(), &edges).map_err(InferenceError::from)?;
    let names = kept.iter().map(|&v| bn.name(v).to_string()).collect();
    let states = kept.iter().map(|&v| bn.states(v).to_vec()).collect();
    CategoricalBN::new(dag, names, states, tables).map_err(|e| ClassifyError::Inference(e.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub auc: f64,
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub curve: Vec<(f64, f64)>,
}

/// ROC curve of `scores` for the positive class (`true`). Tied scores move
/// the curve diagonally, which counts each tied pair as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, ClassifyError> {
    if scores.len() != labels.len() {
        return Err(ClassifyError::Domain("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ClassifyError::Domain("ROC needs both classes present".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(ClassifyError::Domain("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let (x0, y0) = *curve.last().unwrap();
        let point = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (point.0 - x0) * (point.1 + y0) / 2.0;
        curve.push(point);
        i = j;
    }
    Ok(RocCurve { auc, curve })
}

/// Variables observed in every record (excluding `exclude`).
pub fn mutually_observed(data: &Dataset, exclude: Option<usize>) -> BTreeSet<String> {
    (0..data.columns.len())
        .filter(|&c| Some(c) != exclude)
        .filter(|&c| data.rows.iter().all(|row| row[c].is_some()))
        .map(|c| data.columns[c].clone())
        .collect()
}

/// Classifies every row, in parallel; record `r` samples with seed
/// `derive_seed(cfg.sampler.seed, r)`. With `drop_missing`, models are first
/// reduced to the mutually observed variables.
pub fn classify_dataset(
    data: &Dataset,
    models: &[CategoricalBN],
    cfg: &SgsConfig,
    label_column: Option<usize>,
    drop_missing: bool,
) -> Result<Vec<ClassificationResult>, ClassifyError> {
    let keep = mutually_observed(data, label_column);
    let reduced;
    let models: &[CategoricalBN] = if drop_missing {
        if keep.is_empty() {
            return Err(ClassifyError::Domain("no variable is observed in every record".into()));
        }
        reduced = models
            .iter()
            .map(|bn| {
                let known: BTreeSet<String> = keep.iter().filter(|n| bn.node_by_name(n).is_some()).cloned().collect();
                reduce_model(bn, &known)
            })
            .collect::<Result<Vec<_>, _>>()?;
        &reduced
    } else {
        models
    };
    (0..data.rows.len())
        .into_par_iter()
        .map(|r| {
            let mut record = PartialRecord::from_dataset(data, r, label_column);
            if drop_missing {
                record.observed.retain(|name, _| keep.contains(name));
            }
            let mut cfg = cfg.clone();
            cfg.sampler.seed = derive_seed(cfg.sampler.seed, r as u64);
            classify(&record, models, &cfg).map_err(|e| ClassifyError::Record { record: r, source: Box::new(e) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n: usize,
    pub avg_mb_size: f64,
    pub categories: usize,
    pub records_per_model: usize,
    /// Fraction of variables masked in every record.
    pub mask_fraction: f64,
    /// Weight of model-specific CPT rows against rows shared by both models.
    /// Only used with a shared structure.
    pub divergence: f64,
    /// Draw the two graphs independently instead of sharing one.
    pub independent_structure: bool,
    /// CPT rows are Dirichlet draws with this symmetric concentration.
    pub concentration: f64,
    pub sgs: SgsConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n: 30,
            avg_mb_size: 3.3,
            categories: 2,
            records_per_model: 200,
            mask_fraction: 0.4,
            divergence: 0.3,
            independent_structure: false,
            concentration: 0.5,
            sgs: SgsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOutcome {
    pub accuracy_marginalized: f64,
    pub accuracy_dropped: f64,
    pub auc_marginalized: f64,
    pub auc_dropped: f64,
    pub masked: Vec<String>,
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, card: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut t = Vec::with_capacity(rows * card);
    for _ in 0..rows {
        let row: Vec<f64> = (0..card).map(|_| gamma.sample(rng).max(1e-300)).collect();
        let s: f64 = row.iter().sum();
        t.extend(row.into_iter().map(|u| u / s));
    }
    t
}

/// Two class models. With a shared graph, CPT rows mix shared random rows
/// with model-specific ones at weight `divergence`; otherwise each model is
/// an independent random network.
pub fn study_models(cfg: &StudyConfig, seed: u64) -> Result<[CategoricalBN; 2], ClassifyError> {
    let spec = GenSpec::new(Family::ErdosRenyi, cfg.n, cfg.avg_mb_size, cfg.categories, 0.0, seed);
    if cfg.independent_structure {
        let mut out = Vec::with_capacity(2);
        for k in 0..2u64 {
            let dag = gen_dag(&GenSpec { seed: derive_seed(seed, 10 + k), ..spec.clone() })?;
            let c = cfg.categories;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20 + k));
            let tables = dag
                .nodes()
                .map(|v| random_rows(&mut rng, c.pow(dag.parents(v).len() as u32), c, cfg.concentration))
                .collect();
            let bn = CategoricalBN::from_cardinalities(dag.clone(), &vec![c; dag.len()], tables)
                .map_err(|e| ClassifyError::Inference(e.into()))?;
            out.push(bn);
        }
        let b = out.pop().unwrap();
        return Ok([out.pop().unwrap(), b]);
    }
    let dag = gen_dag(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let c = cfg.categories;
    let shared: Vec<Vec<f64>> = dag
        .nodes()
        .map(|v| random_rows(&mut rng, c.pow(dag.parents(v).len() as u32), c, cfg.concentration))
        .collect();
    let build = |rng: &mut ChaCha8Rng| -> Result<CategoricalBN, ClassifyError> {
        let tables = dag
            .nodes()
            .map(|v| {
                let own = random_rows(rng, shared[v].len() / c, c, cfg.concentration);
                shared[v]
                    .iter()
                    .zip(own)
                    .map(|(s, o)| (1.0 - cfg.divergence) * s + cfg.divergence * o)
                    .collect()
            })
            .collect();
        CategoricalBN::from_cardinalities(dag.clone(), &vec![c; dag.len()], tables)
            .map_err(|e| ClassifyError::Inference(e.into()))
    };
    Ok([build(&mut rng)?, build(&mut rng)?])
}

fn accuracy(results: &[ClassificationResult], truth: &[usize]) -> f64 {
    let hits = results.iter().zip(truth).filter(|(r, &t)| r.predicted == t).count();
    hits as f64 / truth.len() as f64
}

fn log_odds(results: &[ClassificationResult]) -> Vec<f64> {
    results.iter().map(|r| r.log_likelihoods[0] - r.log_likelihoods[1]).collect()
}

/// Samples labeled records from two models, masks the same random variables
/// in all of them, and classifies each record twice: with the full models
/// (missing variables marginalized) and with models reduced to the observed
/// variables. Model 0 is the positive class for the AUC.
pub fn synthetic_study(cfg: &StudyConfig, seed: u64) -> Result<StudyOutcome, ClassifyError> {
    if !(0.0..1.0).contains(&cfg.mask_fraction) {
        return Err(ClassifyError::Domain("mask fraction must lie in [0, 1)".into()));
    }
    let models = study_models(cfg, seed)?;
    let n = cfg.n;
    let masked_count = ((cfg.mask_fraction * n as f64) + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let masked: NodeSet = sample_indices(&mut rng, n, masked_count).into_iter().collect();
    let names = models[0].names().to_vec();
    let keep: BTreeSet<String> = (0..n).filter(|v| !masked.contains(v)).map(|v| names[v].clone()).collect();
    let reduced = [reduce_model(&models[0], &keep)?, reduce_model(&models[1], &keep)?];

    let mut records = Vec::new();
    for (label, bn) in models.iter().enumerate() {
        for x in bn.sample_forward(cfg.records_per_model, derive_seed(seed, 3 + label as u64)) {
            let observed = (0..n)
                .filter(|v| !masked.contains(v))
                .map(|v| (names[v].clone(), bn.states(v)[x[v]].clone()))
                .collect();
            let missing = masked.iter().map(|&v| names[v].clone()).collect();
            records.push((label, PartialRecord { observed, missing }));
        }
    }
    let results = records
        .par_iter()
        .enumerate()
        .map(|(r, (_, rec))| {
            let mut sgs = cfg.sgs.clone();
            sgs.sampler.seed = derive_seed(derive_seed(seed, 5), r as u64);
            Ok((classify(rec, &models, &sgs)?, classify_drop_missing(rec, &reduced, &sgs)?))
        })
        .collect::<Result<Vec<_>, ClassifyError>>()?;
    let labels: Vec<bool> = records.iter().map(|(l, _)| *l == 0).collect();
    let truth: Vec<usize> = records.iter().map(|(l, _)| *l).collect();
    let (marg, drop): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(StudyOutcome {
        accuracy_marginalized: accuracy(&marg, &truth),
        accuracy_dropped: accuracy(&drop, &truth),
        auc_marginalized: roc_auc(&log_odds(&marg), &labels)?.auc,
        auc_dropped: roc_auc(&log_odds(&drop), &labels)?.auc,
        masked: masked.iter().map(|&v| names[v].clone()).collect(),
    })
}
