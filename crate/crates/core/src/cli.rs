//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 for bad data (with a JSON error object on stderr), 2 for
//! usage errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::approx::SamplerConfig;
use crate::bench::{gen_cpts, gen_dag, parse_spec_file, run_benchmark, BenchError, Family, GenSpec};
use crate::classify::{classify_dataset, roc_auc, ClassifyError};
use crate::decomposition::decompose;
use crate::engine::{marginal, node_names, MarginalEstimate, Method, SgsConfig};
use crate::error::InferenceError;
use crate::graph::NodeSet;
use crate::io::{format_evidence, parse_evidence, parse_network, serialize_network, validate_network_text, Dataset, FormatError};
use crate::model::{CategoricalBN, Evidence, ModelError};

#[derive(Debug, Parser)]
#[command(name = "sgs", version, about = "Marginal probability of evidence in categorical Bayesian networks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a network file and list every problem found
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Compute P(X_e)
    Marginal {
        #[arg(long)]
        network: PathBuf,
        /// Observations as name=state pairs separated by commas
        #[arg(long, default_value = "")]
        evidence: String,
        #[arg(long, default_value = "sgs", value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Print a JSON object instead of text
        #[arg(long)]
        json: bool,
    },
    /// Show the relevant subgraph, independent subsets and boundary evidence
    Decompose {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "")]
        evidence: String,
        #[arg(long)]
        json: bool,
    },
    /// Generate a random network
    Simulate {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[arg(long)]
        n: usize,
        /// Target mean Markov blanket size
        #[arg(long)]
        mb_size: f64,
        #[arg(long, default_value_t = 2)]
        categories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = crate::bench::DEFAULT_ISLANDS)]
        islands: usize,
        #[arg(long, default_value_t = crate::bench::DEFAULT_REWIRE_PROB)]
        rewire_prob: f64,
        /// Output file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy and timing of estimators on generated networks
    Benchmark {
        /// TOML file with [[instance]] tables
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "sgs,lbp-is,gs", value_delimiter = ',', value_parser = parse_method)]
        methods: Vec<Method>,
        /// Sample budgets
        #[arg(long, default_value = "1000", value_delimiter = ',')]
        budgets: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value = "15", value_parser = parse_n_max)]
        n_max: usize,
        /// CSV output (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a gnuplot-friendly table
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Assign records with missing values to the most likely model
    Classify {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        /// CSV with a header of variable names; "?" marks a missing value
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Column holding the true model name, excluded from the evidence
        #[arg(long)]
        label_column: Option<String>,
        /// Reduce the models to variables observed in every record
        #[arg(long)]
        drop_missing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// ROC curve of the first model's posterior (needs labels, two models)
        #[arg(long)]
        roc: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SamplingArgs {
    /// Subsets with fewer nodes are solved exactly ("inf" for always)
    #[arg(long, default_value = "15", value_parser = parse_n_max)]
    n_max: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplingArgs {
    fn config(&self) -> SgsConfig {
        SgsConfig {
            n_max: self.n_max,
            sampler: SamplerConfig {
                samples: self.samples,
                seed: self.seed,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse()
}

fn parse_n_max(s: &str) -> Result<usize, String> {
    match s {
        "inf" | "infinity" => Ok(usize::MAX),
        _ => s.parse().map_err(|_| format!("'{s}' is not a count or 'inf'")),
    }
}

/// A failure reported as `{"error": code, "message": ...}` on stderr.
#[derive(Debug)]
struct CliError {
    code: String,
    message: String,
    line: Option<usize>,
    column: Option<usize>,
}

impl CliError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.to_string(),
            message: message.into(),
            line: None,
            column: None,
        }
    }

    fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    fn to_json(&self) -> String {
        let mut v = json!({ "error": self.code, "message": self.message });
        if let Some(l) = self.line {
            v["line"] = json!(l);
        }
        if let Some(c) = self.column {
            v["column"] = json!(c);
        }
        v.to_string()
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError {
            code: e.kind.code().to_string(),
            message: e.message,
            line: e.line,
            column: e.column,
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        let code = match &e {
            _ if e.is_capacity() => "capacity",
            InferenceError::Model(ModelError::EvidenceNode(_) | ModelError::EvidenceState { .. }) => "invalid_evidence",
            InferenceError::Argument(_) => "invalid_argument",
            _ => "inference",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        let code = match &e {
            BenchError::InvalidSpec(_) | BenchError::SpecFile(_) => "invalid_spec",
            BenchError::UnreachableDensity { .. } => "unreachable_density",
            BenchError::Truth { .. } => "no_ground_truth",
            BenchError::Inference(inner) => return inner.clone().into(),
            BenchError::Io(_) | BenchError::Csv(_) => "io",
            BenchError::Domain(_) => "domain",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Format(f) => f.into(),
            ClassifyError::Inference(i) => i.into(),
            ClassifyError::Bench(b) => b.into(),
            ClassifyError::Record { record, source } => {
                let mut inner: CliError = (*source).into();
                inner.message = format!("record {record}: {}", inner.message);
                inner
            }
            other => CliError::new("classification", other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::new("io", format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::new("io", e.to_string()))
        }
    }
}

fn load_network(path: &Path) -> Result<CategoricalBN, CliError> {
    let text = read(path)?;
    parse_network(&text).map_err(|e| CliError::from(e).in_file(path))
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

fn names_or_dash(bn: &CategoricalBN, set: &NodeSet) -> String {
    if set.is_empty() {
        "-".to_string()
    } else {
        node_names(bn, set)
    }
}

fn format_estimate(bn: &CategoricalBN, e: &Evidence, est: &MarginalEstimate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method: {}", est.method);
    let _ = writeln!(s, "evidence: {}", if e.is_empty() { "-".to_string() } else { format_evidence(bn, e) });
    let _ = writeln!(s, "P(X_e): {:.15e}", est.value());
    let _ = writeln!(s, "log P(X_e): {:.15e}", est.log_value);
    let _ = writeln!(s, "leftover log factor: {:.15e}", est.leftover_factor);
    for (i, r) in est.per_subset.iter().enumerate() {
        let _ = write!(
            s,
            "subset {}: method={} size={} log_factor={:.15e}",
            i + 1,
            r.method,
            r.subset.len(),
            r.log_factor
        );
        if r.samples > 0 {
            let _ = write!(
                s,
                " samples={} rel_weight_var={:.6e} lbp_iterations={}",
                r.samples, r.relative_weight_variance, r.lbp_iterations
            );
        }
        if r.fell_back {
            s.push_str(" fallback=capacity");
        }
        let _ = writeln!(s, " nodes={}", names_or_dash(bn, &r.subset));
    }
    let _ = writeln!(s, "sampled variables: {}", est.sampled_variables);
    let _ = writeln!(s, "relative std error: {:.6e}", est.relative_variance().max(0.0).sqrt());
    s
}

fn estimate_json(bn: &CategoricalBN, e: &Evidence, est: &MarginalEstimate) -> String {
    let subsets: Vec<_> = est
        .per_subset
        .iter()
        .map(|r| {
            json!({
                "nodes": r.subset.iter().map(|&v| bn.name(v)).collect::<Vec<_>>(),
                "method": r.method,
                "log_factor": r.log_factor,
                "samples": r.samples,
                "relative_weight_variance": r.relative_weight_variance,
                "lbp_iterations": r.lbp_iterations,
                "fell_back": r.fell_back,
            })
        })
        .collect();
    let v = json!({
        "method": est.method,
        "evidence": format_evidence(bn, e),
        "probability": est.value(),
        "log_probability": est.log_value,
        "leftover_log_factor": est.leftover_factor,
        "subsets": subsets,
        "sampled_variables": est.sampled_variables,
        "relative_std_error": est.relative_variance().max(0.0).sqrt(),
    });
    format!("{v}\n")
}

fn model_name(path: &Path, index: usize) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("model{index}"))
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { network } => {
            let text = read(&network)?;
            let issues = validate_network_text(&text);
            let mut s = String::new();
            if issues.is_empty() {
                let bn = parse_network(&text)?;
                let _ = writeln!(s, "ok: {} variables, {} edges", bn.len(), bn.dag().edge_count());
            }
            for i in &issues {
                let _ = writeln!(s, "{}", i.to_json());
            }
            write_out(None, &s)?;
            Ok(if issues.is_empty() { 0 } else { 1 })
        }
        Command::Marginal { network, evidence, method, sampling, json } => {
            let bn = load_network(&network)?;
            let e = parse_evidence(&bn, &evidence)?;
            let est = marginal(&bn, &e, method, &sampling.config())?;
            let text = if json { estimate_json(&bn, &e, &est) } else { format_estimate(&bn, &e, &est) };
            write_out(None, &text)?;
            Ok(0)
        }
        Command::Decompose { network, evidence, json } => {
            let bn = load_network(&network)?;
            let e = parse_evidence(&bn, &evidence)?;
            let d = decompose(&bn, &e)?;
            let irrelevant: NodeSet = bn.dag().nodes().filter(|v| !d.relevant_nodes.contains(v)).collect();
            let text = if json {
                let names = |s: &NodeSet| s.iter().map(|&v| bn.name(v)).collect::<Vec<_>>();
                let subsets: Vec<_> = d
                    .subsets
                    .iter()
                    .zip(&d.boundaries)
                    .map(|(s, b)| {
                        json!({
                            "nodes": names(s),
                            "e_mb": names(&b.e_mb),
                            "e_ch": names(&b.e_ch),
                            "e_pa": names(&b.e_pa),
                        })
                    })
                    .collect();
                format!(
                    "{}\n",
                    json!({
                        "relevant": names(&d.relevant_nodes),
                        "irrelevant": names(&irrelevant),
                        "subsets": subsets,
                        "leftover": names(&d.leftover_evidence),
                    })
                )
            } else {
                let mut s = String::new();
                let _ = writeln!(s, "relevant: {}", names_or_dash(&bn, &d.relevant_nodes));
                let _ = writeln!(s, "irrelevant: {}", names_or_dash(&bn, &irrelevant));
                for (i, (sub, b)) in d.subsets.iter().zip(&d.boundaries).enumerate() {
                    let _ = writeln!(s, "subset {}: {}", i + 1, names_or_dash(&bn, sub));
                    let _ = writeln!(s, "  e_mb: {}", names_or_dash(&bn, &b.e_mb));
                    let _ = writeln!(s, "  e_ch: {}", names_or_dash(&bn, &b.e_ch));
                    let _ = writeln!(s, "  e_pa: {}", names_or_dash(&bn, &b.e_pa));
                }
                let _ = writeln!(s, "leftover: {}", names_or_dash(&bn, &d.leftover_evidence));
                s
            };
            write_out(None, &text)?;
            Ok(0)
        }
        Command::Simulate { family, n, mb_size, categories, seed, islands, rewire_prob, out } => {
            let spec = GenSpec {
                islands,
                rewire_prob,
                ..GenSpec::new(family, n, mb_size, categories, 0.0, seed)
            };
            let dag = gen_dag(&spec)?;
            let bn = gen_cpts(dag, categories, crate::numeric::derive_seed(seed, 1))?;
            write_out(out.as_deref(), &serialize_network(&bn))?;
            Ok(0)
        }
        Command::Benchmark { spec, methods, budgets, reps, n_max, out, tsv } => {
            let specs = parse_spec_file(&read(&spec)?).map_err(|e| CliError::from(e).in_file(&spec))?;
            let cfg = SgsConfig { n_max, ..Default::default() };
            let result = run_benchmark(&specs, &methods, &budgets, reps, &cfg)?;
            let mut buf = Vec::new();
            result.write_csv(&mut buf)?;
            write_out(out.as_deref(), &String::from_utf8_lossy(&buf))?;
            if let Some(path) = tsv {
                let mut buf = Vec::new();
                result.write_tsv(&mut buf)?;
                write_out(Some(&path), &String::from_utf8_lossy(&buf))?;
            }
            Ok(0)
        }
        Command::Classify { models, data, sampling, label_column, drop_missing, out, roc } => {
            let names: Vec<String> = models.iter().enumerate().map(|(i, p)| model_name(p, i)).collect();
            if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
                return Err(CliError::new("classification", "model file names must be distinct"));
            }
            let nets = models.iter().map(|p| load_network(p)).collect::<Result<Vec<_>, _>>()?;
            let dataset = Dataset::parse(&read(&data)?).map_err(|e| CliError::from(e).in_file(&data))?;
            let label_idx = match &label_column {
                Some(name) => Some(dataset.column(name).ok_or_else(|| {
                    CliError::new("unknown_variable", format!("no column named '{name}'"))
                })?),
                None => None,
            };
            let labels: Option<Vec<usize>> = match label_idx {
                Some(c) => Some(
                    dataset
                        .rows
                        .iter()
                        .enumerate()
                        .map(|(r, row)| {
                            let cell = row[c].as_deref().unwrap_or("?");
                            names.iter().position(|n| n == cell).ok_or_else(|| {
                                CliError::new("unknown_label", format!("record {r}: label '{cell}' names no model"))
                            })
                        })
                        .collect::<Result<_, _>>()?,
                ),
                None => None,
            };
            let results = classify_dataset(&dataset, &nets, &sampling.config(), label_idx, drop_missing)?;

            let mut csv = String::from("record");
            if labels.is_some() {
                csv.push_str(",label");
            }
            csv.push_str(",predicted,tie");
            for n in &names {
                let _ = write!(csv, ",loglik_{n}");
            }
            for n in &names {
                let _ = write!(csv, ",posterior_{n}");
            }
            csv.push('\n');
            for (r, res) in results.iter().enumerate() {
                let _ = write!(csv, "{r}");
                if let Some(l) = &labels {
                    let _ = write!(csv, ",{}", names[l[r]]);
                }
                let _ = write!(csv, ",{},{}", names[res.predicted], res.tie);
                for l in &res.log_likelihoods {
                    let _ = write!(csv, ",{l:.15e}");
                }
                for p in &res.posteriors {
                    let _ = write!(csv, ",{p:.15e}");
                }
                csv.push('\n');
            }
            write_out(out.as_deref(), &csv)?;

            if let Some(l) = &labels {
                let hits = results.iter().zip(l).filter(|(r, &t)| r.predicted == t).count();
                let mut summary = format!("accuracy: {:.6}\n", hits as f64 / results.len().max(1) as f64);
                if nets.len() == 2 {
                    let scores: Vec<f64> = results.iter().map(|r| r.log_likelihoods[0] - r.log_likelihoods[1]).collect();
                    let positive: Vec<bool> = l.iter().map(|&t| t == 0).collect();
                    match roc_auc(&scores, &positive) {
                        Ok(curve) => {
                            let _ = writeln!(summary, "auc: {:.6}", curve.auc);
                            if let Some(path) = &roc {
                                let mut t = String::from("# fpr\ttpr\n");
                                for (x, y) in &curve.curve {
                                    let _ = writeln!(t, "{x}\t{y}");
                                }
                                write_out(Some(path), &t)?;
                            }
                        }
                        Err(e) if roc.is_some() => return Err(e.into()),
                        Err(_) => {}
                    }
                }
                if out.is_some() {
                    write_out(None, &summary)?;
                } else {
                    eprint!("{summary}");
                }
            } else if roc.is_some() {
                return Err(CliError::new("classification", "--roc needs --label-column"));
            }
            Ok(0)
        }
    }
}
