//! Approximate inference: loopy belief propagation to build a factorized
//! proposal, importance sampling against it, and the two undecomposed
//! baselines (LBP-guided importance sampling and Gibbs-guided importance
//! sampling).
//!
//! All importance weights are handled in log space. A sample `x` of the free
//! nodes gets weight `Π_t P(x_t | x_pa(t)) / Q(x)` where `t` runs over the
//! target factors, with evidence substituted. The mean weight is an unbiased
//! estimate of the summed target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{relevant_nodes, Boundaries};
use crate::error::InferenceError;
use crate::graph::{NodeId, NodeSet};
use crate::model::{CategoricalBN, Evidence};
use crate::numeric::{derive_seed, log_mean_exp, sample_categorical};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Importance samples drawn per estimate.
    pub samples: usize,
    pub lbp_iterations: usize,
    pub lbp_tolerance: f64,
    pub seed: u64,
    /// Lower bound applied to every proposal probability before renormalizing.
    pub belief_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: 1000,
            lbp_iterations: 10,
            lbp_tolerance: 1e-6,
            seed: 0,
            belief_floor: 1e-6,
        }
    }
}

impl SamplerConfig {
    pub fn check(&self) -> Result<(), InferenceError> {
        if self.samples == 0 {
            return Err(InferenceError::Argument("sample count must be at least 1".into()));
        }
        if self.lbp_iterations == 0 {
            return Err(InferenceError::Argument("LBP needs at least one iteration".into()));
        }
        if !(self.belief_floor > 0.0 && self.belief_floor < 0.1) {
            return Err(InferenceError::Argument("belief floor must lie in (0, 0.1)".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerConfig { seed, ..self.clone() }
    }

    pub fn with_samples(&self, samples: usize) -> Self {
        SamplerConfig { samples, ..self.clone() }
    }
}

/// Fully factorized proposal `Q(X) = Π_v q_v(X_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceDistribution {
    nodes: Vec<NodeId>,
    beliefs: Vec<Vec<f64>>,
    /// Largest number of LBP sweeps any component needed (0 when not built by LBP).
    pub iterations: usize,
}

impl ImportanceDistribution {
    /// Floors every entry at `floor`, then renormalizes each belief.
    pub fn new(nodes: Vec<NodeId>, beliefs: Vec<Vec<f64>>, floor: f64) -> Self {
        assert_eq!(nodes.len(), beliefs.len());
        let beliefs = beliefs
            .into_iter()
            .map(|b| {
                let total: f64 = b.iter().sum();
                let floored: Vec<f64> = b
                    .iter()
                    .map(|&p| {
                        let p = if total > 0.0 && p.is_finite() { p / total } else { 0.0 };
                        p.max(floor)
                    })
                    .collect();
                let total: f64 = floored.iter().sum();
                floored.into_iter().map(|p| p / total).collect()
            })
            .collect();
        ImportanceDistribution {
            nodes,
            beliefs,
            iterations: 0,
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn belief(&self, v: NodeId) -> Option<&[f64]> {
        self.nodes
            .binary_search(&v)
            .ok()
            .map(|i| self.beliefs[i].as_slice())
    }

    pub fn covers(&self, nodes: &NodeSet) -> bool {
        nodes.iter().all(|v| self.nodes.binary_search(v).is_ok())
    }
}

/// Result of one importance-sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceEstimate {
    pub log_estimate: f64,
    /// Sample variance of the weights divided by the squared mean weight.
    pub relative_weight_variance: f64,
    pub samples: usize,
}

impl ImportanceEstimate {
    pub fn estimate(&self) -> f64 {
        self.log_estimate.exp()
    }

    /// Standard error of the mean weight, in linear scale.
    pub fn std_error(&self) -> f64 {
        self.estimate() * (self.relative_weight_variance / self.samples as f64).sqrt()
    }

    fn exact(log_value: f64) -> Self {
        ImportanceEstimate {
            log_estimate: log_value,
            relative_weight_variance: 0.0,
            samples: 0,
        }
    }
}

struct Factor {
    /// indices into the graph's variable list, ascending node id
    vars: Vec<usize>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

/// CPT factors with evidence sliced out, over the free variables they touch.
struct FactorGraph {
    vars: Vec<NodeId>,
    cards: Vec<usize>,
    factors: Vec<Factor>,
    var_factors: Vec<Vec<(usize, usize)>>,
}

impl FactorGraph {
    fn build(bn: &CategoricalBN, factor_nodes: &NodeSet, e: &Evidence) -> Self {
        let mut free = NodeSet::new();
        for &v in factor_nodes {
            free.extend(
                bn.dag()
                    .parents(v)
                    .iter()
                    .chain(std::iter::once(&v))
                    .filter(|u| !e.contains(**u)),
            );
        }
        let vars: Vec<NodeId> = free.into_iter().collect();
        let cards: Vec<usize> = vars.iter().map(|&v| bn.cardinality(v)).collect();
        let mut x = vec![0usize; bn.len()];
        for (v, s) in e.iter() {
            x[v] = s;
        }
        let mut factors = Vec::new();
        for &v in factor_nodes {
            let mut scope: Vec<NodeId> = bn.dag().parents(v).to_vec();
            scope.push(v);
            scope.sort_unstable();
            scope.retain(|u| !e.contains(*u));
            if scope.is_empty() {
                continue;
            }
            let idx: Vec<usize> = scope.iter().map(|u| vars.binary_search(u).unwrap()).collect();
            let fcards: Vec<usize> = idx.iter().map(|&i| cards[i]).collect();
            let size: usize = fcards.iter().product();
            let mut table = Vec::with_capacity(size);
            let mut digits = vec![0usize; scope.len()];
            for _ in 0..size {
                for (pos, &u) in scope.iter().enumerate() {
                    x[u] = digits[pos];
                }
                table.push(bn.prob(v, &x));
                advance(&mut digits, &fcards);
            }
            factors.push(Factor { vars: idx, cards: fcards, table });
        }
        let mut var_factors = vec![Vec::new(); vars.len()];
        for (f, factor) in factors.iter().enumerate() {
            for (pos, &i) in factor.vars.iter().enumerate() {
                var_factors[i].push((f, pos));
            }
        }
        FactorGraph { vars, cards, factors, var_factors }
    }

    /// Variable-index components of the factor graph.
    fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vars.len()];
        let mut out = Vec::new();
        for start in 0..self.vars.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for &(f, _) in &self.var_factors[i] {
                    for &j in &self.factors[f].vars {
                        if !seen[j] {
                            seen[j] = true;
                            comp.push(j);
                            stack.push(j);
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

fn advance(digits: &mut [usize], cards: &[usize]) {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if digits[pos] < cards[pos] {
            return;
        }
        digits[pos] = 0;
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Sum-product loopy belief propagation on the factor graph formed by the
/// CPTs of `factor_nodes` with evidence clamped. Messages start at one and
/// are updated synchronously. Each connected component iterates until its
/// beliefs move less than the tolerance (max-norm) or the iteration limit is
/// reached. Returns the floored node beliefs as a proposal.
pub fn loopy_bp(
    bn: &CategoricalBN,
    factor_nodes: &NodeSet,
    e: &Evidence,
    cfg: &SamplerConfig,
) -> ImportanceDistribution {
    let graph = FactorGraph::build(bn, factor_nodes, e);
    let ones = |i: usize| vec![1.0; graph.cards[i]];
    // f2v[f][pos], v2f[f][pos]
    let mut f2v: Vec<Vec<Vec<f64>>> = graph
        .factors
        .iter()
        .map(|f| f.vars.iter().map(|&i| ones(i)).collect())
        .collect();
    let mut v2f = f2v.clone();
    let mut beliefs: Vec<Vec<f64>> = (0..graph.vars.len())
        .map(|i| {
            let mut b = ones(i);
            normalize(&mut b);
            b
        })
        .collect();
    let mut max_iterations = 0;

    for comp in graph.components() {
        let comp_factors: Vec<usize> = {
            let mut fs: Vec<usize> = comp
                .iter()
                .flat_map(|&i| graph.var_factors[i].iter().map(|&(f, _)| f))
                .collect();
            fs.sort_unstable();
            fs.dedup();
            fs
        };
        for it in 1..=cfg.lbp_iterations {
            // variable -> factor from the previous factor -> variable messages
            for &i in &comp {
                for &(f, pos) in &graph.var_factors[i] {
                    let mut m = ones(i);
                    for &(g, gpos) in &graph.var_factors[i] {
                        if g != f {
                            m.iter_mut().zip(&f2v[g][gpos]).for_each(|(a, b)| *a *= b);
                        }
                    }
                    normalize(&mut m);
                    v2f[f][pos] = m;
                }
            }
            // factor -> variable
            for &f in &comp_factors {
                let factor = &graph.factors[f];
                let mut out: Vec<Vec<f64>> = factor.cards.iter().map(|&c| vec![0.0; c]).collect();
                let mut digits = vec![0usize; factor.vars.len()];
                for &value in &factor.table {
                    for target in 0..factor.vars.len() {
                        let mut p = value;
                        for (pos, &d) in digits.iter().enumerate() {
                            if pos != target {
                                p *= v2f[f][pos][d];
                            }
                        }
                        out[target][digits[target]] += p;
                    }
                    advance(&mut digits, &factor.cards);
                }
                for (pos, mut m) in out.into_iter().enumerate() {
                    normalize(&mut m);
                    f2v[f][pos] = m;
                }
            }
            let mut change: f64 = 0.0;
            for &i in &comp {
                let mut b = ones(i);
                for &(f, pos) in &graph.var_factors[i] {
                    b.iter_mut().zip(&f2v[f][pos]).for_each(|(a, m)| *a *= m);
                }
                normalize(&mut b);
                for (old, new) in beliefs[i].iter().zip(&b) {
                    change = change.max((old - new).abs());
                }
                beliefs[i] = b;
            }
            max_iterations = max_iterations.max(it);
            if change < cfg.lbp_tolerance {
                break;
            }
        }
    }
    let mut q = ImportanceDistribution::new(graph.vars, beliefs, cfg.belief_floor);
    q.iterations = max_iterations;
    q
}

/// Draws `samples` configurations of `free` from `q` and averages the weights
/// `Π_{t ∈ targets} P(x_t | x_pa(t)) / Q(x)`.
pub fn importance_sample(
    bn: &CategoricalBN,
    free: &NodeSet,
    targets: &NodeSet,
    e: &Evidence,
    q: &ImportanceDistribution,
    samples: usize,
    seed: u64,
) -> Result<ImportanceEstimate, InferenceError> {
    if samples == 0 {
        return Err(InferenceError::Argument("sample count must be at least 1".into()));
    }
    let proposal: Vec<(NodeId, &[f64])> = free
        .iter()
        .map(|&v| {
            q.belief(v)
                .map(|b| (v, b))
                .ok_or_else(|| InferenceError::Argument(format!("proposal does not cover node {v}")))
        })
        .collect::<Result<_, _>>()?;
    let targets: Vec<NodeId> = targets.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0usize; bn.len()];
    for (v, s) in e.iter() {
        x[v] = s;
    }
    let mut log_weights = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut log_q = 0.0;
        for &(v, b) in &proposal {
            let s = sample_categorical(b, rng.gen::<f64>());
            x[v] = s;
            log_q += b[s].ln();
        }
        let log_p: f64 = targets.iter().map(|&t| bn.prob(t, &x).ln()).sum();
        log_weights.push(log_p - log_q);
    }
    let log_estimate = log_mean_exp(&log_weights);
    let relative_weight_variance = if samples > 1 && log_estimate.is_finite() {
        let m = samples as f64;
        let sq: f64 = log_weights
            .iter()
            .map(|lw| {
                let r = (lw - log_estimate).exp() - 1.0;
                r * r
            })
            .sum();
        sq / (m - 1.0)
    } else {
        0.0
    };
    Ok(ImportanceEstimate {
        log_estimate,
        relative_weight_variance,
        samples,
    })
}

/// Importance estimate of `Σ_{X_S} Π_{v ∈ S ∪ e_ch} P(x_v | x_pa(v))` for one
/// subset, i.e. of `P(X_{e_ch} | X_{e_mb \ e_ch})`. Uses `cfg.samples` draws
/// seeded from `cfg.seed`.
pub fn importance_estimate(
    bn: &CategoricalBN,
    subset: &NodeSet,
    bounds: &Boundaries,
    e: &Evidence,
    q: &ImportanceDistribution,
    cfg: &SamplerConfig,
) -> Result<ImportanceEstimate, InferenceError> {
    if !q.covers(subset) {
        return Err(InferenceError::Argument("proposal does not cover the subset".into()));
    }
    let targets: NodeSet = subset.union(&bounds.e_ch).copied().collect();
    importance_sample(bn, subset, &targets, e, q, cfg.samples, cfg.seed)
}

/// Relevant nodes split into free nodes, nodes whose CPT involves a free
/// node, and the log of the CPT entries fixed entirely by evidence.
struct Undecomposed {
    free: NodeSet,
    targets: NodeSet,
    constant: f64,
}

fn undecomposed(bn: &CategoricalBN, e: &Evidence) -> Undecomposed {
    let relevant = relevant_nodes(bn.dag(), &e.nodes());
    let free: NodeSet = relevant.iter().copied().filter(|&v| !e.contains(v)).collect();
    let mut targets = NodeSet::new();
    let mut constant = 0.0;
    for &v in &relevant {
        let touches_free =
            !e.contains(v) || bn.dag().parents(v).iter().any(|&p| !e.contains(p));
        if touches_free {
            targets.insert(v);
        } else {
            constant += bn.prob_with(v, |u| e.get(u).expect("evidence family")).ln();
        }
    }
    Undecomposed { free, targets, constant }
}

/// LBP-IS baseline: one proposal from loopy BP over the whole relevant
/// subgraph, then importance sampling of all its free nodes jointly.
pub fn lbp_is_estimate(
    bn: &CategoricalBN,
    e: &Evidence,
    cfg: &SamplerConfig,
) -> Result<ImportanceEstimate, InferenceError> {
    bn.check_evidence(e)?;
    cfg.check()?;
    let problem = undecomposed(bn, e);
    if problem.free.is_empty() {
        return Ok(ImportanceEstimate::exact(problem.constant));
    }
    let q = loopy_bp(bn, &problem.targets, e, cfg);
    let mut est = importance_sample(
        bn,
        &problem.free,
        &problem.targets,
        e,
        &q,
        cfg.samples,
        derive_seed(cfg.seed, 0),
    )?;
    est.log_estimate += problem.constant;
    Ok(est)
}

/// GS baseline: single-site Gibbs sampling over the free relevant nodes
/// (systematic scan, full conditionals from Markov blankets). After
/// `burn_in` discarded sweeps, half of the sample budget goes to sweeps whose
/// state frequencies form a factorized proposal; the other half is spent on
/// importance samples from that proposal.
pub fn gibbs_estimate(
    bn: &CategoricalBN,
    e: &Evidence,
    cfg: &SamplerConfig,
    burn_in: usize,
) -> Result<ImportanceEstimate, InferenceError> {
    bn.check_evidence(e)?;
    cfg.check()?;
    let problem = undecomposed(bn, e);
    if problem.free.is_empty() {
        return Ok(ImportanceEstimate::exact(problem.constant));
    }
    let relevant = relevant_nodes(bn.dag(), &e.nodes());
    let free: Vec<NodeId> = problem.free.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));

    // initial state: ancestral draw with evidence clamped
    let mut x = vec![0usize; bn.len()];
    for (v, s) in e.iter() {
        x[v] = s;
    }
    for v in bn.dag().topological_order()? {
        if relevant.contains(&v) && !e.contains(v) {
            let row = bn.cpt(v).row(bn.row_index(v, &x));
            x[v] = sample_categorical(row, rng.gen::<f64>());
        }
    }
    let blankets: Vec<Vec<NodeId>> = free
        .iter()
        .map(|&v| {
            bn.dag()
                .children(v)
                .iter()
                .copied()
                .filter(|c| relevant.contains(c))
                .collect()
        })
        .collect();
    let sweeps = (cfg.samples / 2).max(1);
    let draws = cfg.samples.saturating_sub(sweeps).max(1);
    let mut counts: Vec<Vec<f64>> = free.iter().map(|&v| vec![0.0; bn.cardinality(v)]).collect();
    let mut conditional = Vec::new();
    for sweep in 0..burn_in + sweeps {
        for (k, &v) in free.iter().enumerate() {
            conditional.clear();
            for s in 0..bn.cardinality(v) {
                x[v] = s;
                let lp = bn.prob(v, &x).ln()
                    + blankets[k].iter().map(|&c| bn.prob(c, &x).ln()).sum::<f64>();
                conditional.push(lp);
            }
            let max = conditional.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            conditional.iter_mut().for_each(|lp| *lp = (*lp - max).exp());
            x[v] = sample_categorical(&conditional, rng.gen::<f64>());
        }
        if sweep >= burn_in {
            for (k, &v) in free.iter().enumerate() {
                counts[k][x[v]] += 1.0;
            }
        }
    }
    let q = ImportanceDistribution::new(free, counts, cfg.belief_floor);
    let mut est = importance_sample(
        bn,
        &problem.free,
        &problem.targets,
        e,
        &q,
        draws,
        derive_seed(cfg.seed, 2),
    )?;
    est.log_estimate += problem.constant;
    Ok(est)
}
