//! Random network generators, evidence selection and the accuracy-versus-time
//! benchmark harness.
//!
//! Every generator orients edges from lower to higher node index, so the
//! output is acyclic by construction. Density is set by calibrating one
//! family-specific parameter until the mean Markov-blanket size of pilot
//! graphs matches the requested value.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{marginal, Method, SgsConfig};
use crate::error::InferenceError;
use crate::exact::jt_log_marginal;
use crate::graph::{Dag, NodeId};
use crate::model::{CategoricalBN, Evidence};
use crate::numeric::derive_seed;

pub const DEFAULT_ISLANDS: usize = 3;
pub const DEFAULT_REWIRE_PROB: f64 = 0.1;
const PILOT_GRAPHS: u64 = 16;
const BISECTION_STEPS: usize = 32;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("{family} graphs with n={n} cannot reach mean Markov blanket size {target} (closest {achieved:.3})")]
    UnreachableDensity {
        family: Family,
        n: usize,
        target: f64,
        achieved: f64,
    },
    #[error("{0}")]
    Domain(String),
    #[error("ground truth unavailable for instance seed {seed}: {source}")]
    Truth { seed: u64, source: InferenceError },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("spec file: {0}")]
    SpecFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ErdosRenyi,
    BarabasiAlbert,
    WattsStrogatz,
    ErIslands,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::ErdosRenyi,
        Family::BarabasiAlbert,
        Family::WattsStrogatz,
        Family::ErIslands,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::ErdosRenyi => "erdos_renyi",
            Family::BarabasiAlbert => "barabasi_albert",
            Family::WattsStrogatz => "watts_strogatz",
            Family::ErIslands => "er_islands",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "er" | "erdos_renyi" => Ok(Family::ErdosRenyi),
            "ba" | "barabasi_albert" => Ok(Family::BarabasiAlbert),
            "ws" | "watts_strogatz" => Ok(Family::WattsStrogatz),
            "islands" | "er_islands" => Ok(Family::ErIslands),
            _ => Err(format!("unknown graph family '{s}' (expected er, ba, ws or islands)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    /// Target mean Markov-blanket size.
    pub avg_mb_size: f64,
    pub categories: usize,
    pub evidence_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_islands")]
    pub islands: usize,
    #[serde(default = "default_rewire")]
    pub rewire_prob: f64,
}

fn default_islands() -> usize {
    DEFAULT_ISLANDS
}

fn default_rewire() -> f64 {
    DEFAULT_REWIRE_PROB
}

impl GenSpec {
    pub fn new(family: Family, n: usize, avg_mb_size: f64, categories: usize, evidence_fraction: f64, seed: u64) -> Self {
        GenSpec {
            family,
            n,
            avg_mb_size,
            categories,
            evidence_fraction,
            seed,
            islands: DEFAULT_ISLANDS,
            rewire_prob: DEFAULT_REWIRE_PROB,
        }
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.categories < 2 {
            return bad("categories must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.evidence_fraction) {
            return bad("evidence fraction must lie in [0, 1]");
        }
        if !(self.avg_mb_size >= 0.0 && self.avg_mb_size.is_finite()) {
            return bad("mean Markov blanket size must be a non-negative number");
        }
        if self.family == Family::ErIslands && (self.islands == 0 || self.islands > self.n) {
            return bad("island count must lie in [1, n]");
        }
        if !(0.0..=1.0).contains(&self.rewire_prob) {
            return bad("rewire probability must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Draws an integer from a fractional count: `floor(x)`, plus one with
/// probability `frac(x)`.
fn fractional_count(x: f64, rng: &mut ChaCha8Rng) -> usize {
    let base = x.floor();
    base as usize + usize::from(rng.gen::<f64>() < x - base)
}

fn erdos_renyi_edges(nodes: std::ops::Range<usize>, p: f64, rng: &mut ChaCha8Rng, edges: &mut Vec<(NodeId, NodeId)>) {
    for j in nodes.clone() {
        for i in nodes.start..j {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
}

fn barabasi_albert_edges(n: usize, m: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for j in 1..n {
        let k = fractional_count(m, rng).min(j);
        let mut chosen = BTreeSet::new();
        while chosen.len() < k {
            let total: usize = (0..j).filter(|i| !chosen.contains(i)).map(|i| degree[i] + 1).sum();
            let mut target = rng.gen_range(0..total);
            for i in (0..j).filter(|i| !chosen.contains(i)) {
                let w = degree[i] + 1;
                if target < w {
                    chosen.insert(i);
                    break;
                }
                target -= w;
            }
        }
        for i in chosen {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    edges
}

fn watts_strogatz_edges(n: usize, k: f64, beta: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let reach = (n - 1) / 2;
    let mut lattice = Vec::new();
    for i in 0..n {
        let span = fractional_count(k, rng).min(reach);
        for d in 1..=span {
            lattice.push((i, (i + d) % n));
        }
    }
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut present: BTreeSet<(usize, usize)> = lattice.iter().map(|&(a, b)| key(a, b)).collect();
    for &(i, t) in &lattice {
        if rng.gen::<f64>() >= beta {
            continue;
        }
        let options: Vec<usize> = (0..n).filter(|&w| w != i && !present.contains(&key(i, w))).collect();
        if options.is_empty() {
            continue;
        }
        let w = options[rng.gen_range(0..options.len())];
        present.remove(&key(i, t));
        present.insert(key(i, w));
    }
    present.into_iter().collect()
}

fn island_ranges(n: usize, islands: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / islands, n % islands);
    let mut start = 0;
    (0..islands)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn islands_edges(n: usize, islands: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let ranges = island_ranges(n, islands);
    let mut edges = Vec::new();
    for r in &ranges {
        erdos_renyi_edges(r.clone(), p, rng, &mut edges);
    }
    for pair in ranges.windows(2) {
        let u = rng.gen_range(pair[0].clone());
        let v = rng.gen_range(pair[1].clone());
        edges.push((u, v));
    }
    edges
}

fn build(spec: &GenSpec, param: f64, seed: u64) -> Dag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = match spec.family {
        Family::ErdosRenyi => {
            let mut edges = Vec::new();
            erdos_renyi_edges(0..spec.n, param, &mut rng, &mut edges);
            edges
        }
        Family::BarabasiAlbert => barabasi_albert_edges(spec.n, param, &mut rng),
        Family::WattsStrogatz => watts_strogatz_edges(spec.n, param, spec.rewire_prob, &mut rng),
        Family::ErIslands => islands_edges(spec.n, spec.islands, param, &mut rng),
    };
    Dag::new(spec.n, &edges).expect("index-oriented edges form a DAG")
}

pub fn mean_markov_blanket_size(dag: &Dag) -> f64 {
    if dag.is_empty() {
        return 0.0;
    }
    let total: usize = dag.nodes().map(|v| dag.markov_blanket(v).map_or(0, |m| m.len())).sum();
    total as f64 / dag.len() as f64
}

fn param_range(spec: &GenSpec) -> (f64, f64) {
    match spec.family {
        Family::ErdosRenyi | Family::ErIslands => (0.0, 1.0),
        Family::BarabasiAlbert => (0.0, (spec.n - 1) as f64),
        Family::WattsStrogatz => (0.0, ((spec.n - 1) / 2) as f64),
    }
}

type CalibrationKey = (Family, usize, u64, usize, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalibrationKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Density parameter whose pilot graphs have mean Markov-blanket size
/// closest to `spec.avg_mb_size`. Pilots use fixed seeds, so the result
/// depends only on the family, `n` and the target.
pub fn calibrate(spec: &GenSpec) -> Result<f64, BenchError> {
    spec.check()?;
    let key = (
        spec.family,
        spec.n,
        spec.avg_mb_size.to_bits(),
        spec.islands,
        spec.rewire_prob.to_bits(),
    );
    if let Some(&p) = calibration_cache().lock().unwrap().get(&key) {
        return Ok(p);
    }
    let pilot = |param: f64| -> f64 {
        (0..PILOT_GRAPHS)
            .map(|i| mean_markov_blanket_size(&build(spec, param, derive_seed(0x5eed_ca1b, i))))
            .sum::<f64>()
            / PILOT_GRAPHS as f64
    };
    let target = spec.avg_mb_size;
    let (mut lo, mut hi) = param_range(spec);
    let unreachable = |achieved: f64| BenchError::UnreachableDensity {
        family: spec.family,
        n: spec.n,
        target,
        achieved,
    };
    let top = pilot(hi);
    if top < target - 0.25 {
        return Err(unreachable(top));
    }
    let bottom = pilot(lo);
    let param = if bottom >= target {
        lo
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if pilot(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let achieved = pilot(param);
    if (achieved - target).abs() > (0.05 * target).max(0.25) {
        return Err(unreachable(achieved));
    }
    calibration_cache().lock().unwrap().insert(key, param);
    Ok(param)
}

pub fn gen_dag(spec: &GenSpec) -> Result<Dag, BenchError> {
    let param = calibrate(spec)?;
    Ok(build(spec, param, spec.seed))
}

/// Each CPT row: `categories` independent uniform draws, normalized.
pub fn gen_cpts(dag: Dag, categories: usize, seed: u64) -> Result<CategoricalBN, BenchError> {
    if categories < 2 {
        return Err(BenchError::InvalidSpec("categories must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = dag
        .nodes()
        .map(|v| {
            let rows = categories.pow(dag.parents(v).len() as u32);
            let mut table = Vec::with_capacity(rows * categories);
            for _ in 0..rows {
                let row: Vec<f64> = (0..categories).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = row.iter().sum();
                table.extend(row.into_iter().map(|u| u / total));
            }
            table
        })
        .collect();
    let cards = vec![categories; dag.len()];
    CategoricalBN::from_cardinalities(dag, &cards, tables)
        .map_err(|e| BenchError::Inference(InferenceError::Model(e)))
}

/// `floor(f·n)` nodes chosen uniformly without replacement, observed at the
/// states of one forward sample.
pub fn pick_evidence(bn: &CategoricalBN, fraction: f64, seed: u64) -> Result<Evidence, BenchError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(BenchError::InvalidSpec("evidence fraction must lie in [0, 1]".into()));
    }
    let n = bn.len();
    let k = ((fraction * n as f64) + 1e-9).floor() as usize;
    let k = k.min(n);
    if k == 0 {
        return Ok(Evidence::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let nodes = sample_indices(&mut rng, n, k);
    let x = bn.sample_forward(1, derive_seed(seed, 1)).pop().unwrap();
    Ok(nodes.into_iter().map(|v| (v, x[v])).collect())
}

/// `sqrt(mean((truth − est)²)) / truth`.
pub fn nrmse(truth: f64, estimates: &[f64]) -> Result<f64, BenchError> {
    if !(truth > 0.0 && truth.is_finite()) {
        return Err(BenchError::Domain(format!("NRMSE needs a positive truth, got {truth}")));
    }
    if estimates.is_empty() {
        return Err(BenchError::Domain("NRMSE needs at least one estimate".into()));
    }
    let mse = estimates.iter().map(|e| (truth - e).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok(mse.sqrt() / truth)
}

/// A generated benchmark problem with its exact answer.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: GenSpec,
    pub bn: CategoricalBN,
    pub evidence: Evidence,
    pub log_truth: f64,
}

impl Instance {
    pub fn generate(spec: &GenSpec, cfg: &SgsConfig) -> Result<Self, BenchError> {
        let dag = gen_dag(spec)?;
        let bn = gen_cpts(dag, spec.categories, derive_seed(spec.seed, 1))?;
        let evidence = pick_evidence(&bn, spec.evidence_fraction, derive_seed(spec.seed, 2))?;
        let log_truth = match jt_log_marginal(&bn, &evidence, cfg.table_cap) {
            Ok(lv) => lv,
            Err(err) if err.is_capacity() => bn
                .enumerate_log_marginal(&evidence, cfg.enumeration_bits)
                .map_err(|_| BenchError::Truth { seed: spec.seed, source: err })?,
            Err(source) => return Err(BenchError::Truth { seed: spec.seed, source }),
        };
        Ok(Instance { spec: spec.clone(), bn, evidence, log_truth })
    }

    /// Seed shared by all methods for repetition `rep`, so their random
    /// streams line up.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(derive_seed(self.spec.seed, 3), rep as u64)
    }

    /// One run; returns the log estimate and the wall time in milliseconds.
    pub fn estimate(&self, method: Method, budget: usize, rep: usize, cfg: &SgsConfig) -> Result<(f64, f64), BenchError> {
        let mut cfg = cfg.clone();
        cfg.sampler.samples = budget;
        cfg.sampler.seed = self.rep_seed(rep);
        let start = Instant::now();
        let est = marginal(&self.bn, &self.evidence, method, &cfg)?;
        Ok((est.log_value, start.elapsed().as_secs_f64() * 1e3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: Family,
    pub n: usize,
    #[serde(rename = "C")]
    pub categories: usize,
    #[serde(rename = "f")]
    pub evidence_fraction: f64,
    #[serde(rename = "S")]
    pub avg_mb_size: f64,
    pub method: Method,
    pub budget: usize,
    /// Mean wall time of one repetition.
    pub wall_time_ms: f64,
    pub nrmse: f64,
    /// Number of repetitions behind the row.
    pub rep: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["family", "n", "C", "f", "S", "method", "budget", "wall_time_ms", "nrmse", "rep"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, BenchError> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<Result<Vec<BenchRow>, _>>()?;
        Ok(BenchResult { rows })
    }

    /// Whitespace-separated columns with a commented header, for gnuplot.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<(), BenchError> {
        writeln!(out, "# family\tn\tC\tf\tS\tmethod\tbudget\twall_time_ms\tnrmse\trep")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.family, r.n, r.categories, r.evidence_fraction, r.avg_mb_size, r.method, r.budget, r.wall_time_ms, r.nrmse, r.rep
            )?;
        }
        Ok(())
    }
}

/// Runs every (instance, method, budget) combination `repetitions` times and
/// reports the mean wall time and the NRMSE against the junction-tree truth.
/// Rows come out in spec, method, budget order.
pub fn run_benchmark(
    specs: &[GenSpec],
    methods: &[Method],
    budgets: &[usize],
    repetitions: usize,
    cfg: &SgsConfig,
) -> Result<BenchResult, BenchError> {
    if repetitions == 0 {
        return Err(BenchError::InvalidSpec("repetitions must be at least 1".into()));
    }
    if budgets.contains(&0) {
        return Err(BenchError::InvalidSpec("budgets must be positive".into()));
    }
    let instances = specs
        .par_iter()
        .map(|s| Instance::generate(s, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, Method, usize)> = (0..instances.len())
        .flat_map(|i| methods.iter().flat_map(move |&m| budgets.iter().map(move |&b| (i, m, b))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, method, budget)| {
            let inst = &instances[i];
            let runs = (0..repetitions)
                .into_par_iter()
                .map(|rep| inst.estimate(method, budget, rep, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let ratios: Vec<f64> = runs.iter().map(|(lv, _)| (lv - inst.log_truth).exp()).collect();
            let wall = runs.iter().map(|(_, t)| t).sum::<f64>() / repetitions as f64;
            Ok(BenchRow {
                family: inst.spec.family,
                n: inst.spec.n,
                categories: inst.spec.categories,
                evidence_fraction: inst.spec.evidence_fraction,
                avg_mb_size: inst.spec.avg_mb_size,
                method,
                budget,
                wall_time_ms: wall,
                nrmse: nrmse(1.0, &ratios)?,
                rep: repetitions,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    Ok(BenchResult { rows })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecEntry {
    family: String,
    n: usize,
    avg_mb_size: f64,
    categories: usize,
    evidence_fraction: f64,
    seed: u64,
    #[serde(default = "default_islands")]
    islands: usize,
    #[serde(default = "default_rewire")]
    rewire_prob: f64,
    /// Instances generated with consecutive seeds starting at `seed`.
    #[serde(default = "one")]
    count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    instance: Vec<SpecEntry>,
}

/// Reads `[[instance]]` tables; each expands to `count` specs.
pub fn parse_spec_file(text: &str) -> Result<Vec<GenSpec>, BenchError> {
    let file: SpecFile = toml::from_str(text).map_err(|e| BenchError::SpecFile(e.to_string()))?;
    let mut specs = Vec::new();
    for entry in file.instance {
        let family: Family = entry.family.parse().map_err(BenchError::SpecFile)?;
        for k in 0..entry.count {
            let spec = GenSpec {
                family,
                n: entry.n,
                avg_mb_size: entry.avg_mb_size,
                categories: entry.categories,
                evidence_fraction: entry.evidence_fraction,
                seed: entry.seed.wrapping_add(k as u64),
                islands: entry.islands,
                rewire_prob: entry.rewire_prob,
            };
            spec.check()?;
            specs.push(spec);
        }
    }
    if specs.is_empty() {
        return Err(BenchError::SpecFile("no [[instance]] entries".into()));
    }
    Ok(specs)
}
