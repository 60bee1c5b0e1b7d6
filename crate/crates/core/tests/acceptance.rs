//! End-to-end acceptance checks. Runs as a plain program so each criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use sgs::bench::{nrmse, Family, GenSpec, Instance};
use sgs::classify::{synthetic_study, StudyConfig};
use sgs::decomposition::{decompose, find_subsets, relevant_nodes};
use sgs::engine::{marginal, Method, SgsConfig, SubsetMethod};
use sgs::graph::{Dag, NodeSet};
use sgs::io::{format_evidence, parse_network, serialize_network, Dataset, ErrorKind};
use sgs::model::CategoricalBN;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sgs")).args(args).output().expect("run sgs")
}

fn json_log_probability(out: &std::process::Output) -> Result<f64, String> {
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    v["log_probability"].as_f64().ok_or_else(|| "no log_probability".to_string())
}

// ---------------------------------------------------------------- 1 and 2

struct CorpusCase {
    file: String,
    evidence: String,
}

fn exactness_corpus(dir: &Path) -> Vec<CorpusCase> {
    (0..200u64)
        .map(|i| {
            let mut r = rng(derive(1, i));
            let n = 2 + (i % 13) as usize;
            let c = 2 + (i % 2) as usize;
            let f = [0.25, 0.5, 0.75][(i / 2 % 3) as usize];
            let dag = random_dag(&mut r, n, 0.35, 3);
            let bn = with_cardinality(&mut r, dag, c);
            let e = random_evidence(&mut r, &bn, f);
            let path = dir.join(format!("net{i}.toml"));
            std::fs::write(&path, serialize_network(&bn)).unwrap();
            CorpusCase {
                file: path.to_str().unwrap().to_string(),
                evidence: format_evidence(&bn, &e),
            }
        })
        .collect()
}

fn derive(a: u64, b: u64) -> u64 {
    sgs::numeric::derive_seed(a, b)
}

fn criteria_1_2(corpus: &[CorpusCase]) -> (Outcome, Outcome) {
    let start = Instant::now();
    let results: Vec<Result<(f64, f64, f64), String>> = corpus
        .par_iter()
        .map(|c| {
            let base = ["marginal", "--network", &c.file, "--evidence", &c.evidence, "--json"];
            let run = |extra: &[&str]| {
                let mut args = base.to_vec();
                args.extend_from_slice(extra);
                json_log_probability(&cli(&args))
            };
            let en = run(&["--method", "enum"])?;
            let sg = run(&["--method", "sgs", "--n-max", "inf"])?;
            let jt = run(&["--method", "jt"])?;
            Ok((en, sg, jt))
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let rel = |a: f64, b: f64| ((a - b).exp() - 1.0).abs();
    let mut errors = Vec::new();
    let (mut ok1, mut ok2, mut worst1, mut worst2) = (0, 0, 0.0f64, 0.0f64);
    for r in &results {
        match r {
            Ok((en, sg, jt)) => {
                let (e1, e2) = (rel(*sg, *en), rel(*jt, *en));
                worst1 = worst1.max(e1);
                worst2 = worst2.max(e2);
                ok1 += usize::from(e1 <= 1e-9);
                ok2 += usize::from(e2 <= 1e-9);
            }
            Err(e) => errors.push(e.clone()),
        }
    }
    let n = corpus.len();
    let c1 = outcome(
        ok1 == n && secs < 120.0,
        format!("sgs (n_max=inf) vs enum: {ok1}/{n} within 1e-9, max rel err {worst1:.1e}, {secs:.1}s for all three methods{}", err_note(&errors)),
    );
    let c2 = outcome(
        ok2 == n,
        format!("jt vs enum: {ok2}/{n} within 1e-9, max rel err {worst2:.1e}{}", err_note(&errors)),
    );
    (c1, c2)
}

fn err_note(errors: &[String]) -> String {
    match errors.first() {
        Some(e) => format!(", {} errors (first: {})", errors.len(), e.trim()),
        None => String::new(),
    }
}

// ---------------------------------------------------------------- 3

fn partition(dag: &Dag, e: &NodeSet) -> BTreeSet<NodeSet> {
    let relevant = relevant_nodes(dag, e);
    let (sub, map) = dag.induced(&relevant);
    let le: NodeSet = map.iter().enumerate().filter(|(_, o)| e.contains(o)).map(|(i, _)| i).collect();
    find_subsets(&sub, &le).iter().map(|s| s.iter().map(|&v| map[v]).collect()).collect()
}

fn certify(dag: &Dag, e: &NodeSet, subsets: &[NodeSet]) -> bool {
    let relevant = relevant_nodes(dag, e);
    let free: NodeSet = relevant.difference(e).copied().collect();
    let union: NodeSet = subsets.iter().flatten().copied().collect();
    if union != free || subsets.iter().map(NodeSet::len).sum::<usize>() != free.len() {
        return false;
    }
    let (sub, map) = dag.induced(&relevant);
    let local = |s: &NodeSet| -> NodeSet { s.iter().map(|v| map.iter().position(|m| m == v).unwrap()).collect() };
    let le = local(e);
    subsets.iter().all(|s| {
        let ls = local(s);
        let rest: NodeSet = local(&free).difference(&ls).copied().collect();
        let separated = rest.is_empty() || d_separated_oracle(&sub, &ls, &rest, &le);
        let v: Vec<_> = ls.iter().copied().collect();
        let connected = v.iter().enumerate().all(|(i, &a)| {
            v[i + 1..].iter().all(|&b| !d_separated_oracle(&sub, &[a].into(), &[b].into(), &le))
        });
        separated && connected
    })
}

fn criterion_3() -> Outcome {
    let mut failures = 0;
    let mut subsets_seen = 0;
    for i in 0..500u64 {
        let mut r = rng(derive(3, i));
        let n = r.gen_range(1..=15);
        let p = r.gen_range(0.05..0.5);
        let dag = random_dag(&mut r, n, p, 4);
        let bn = with_cardinality(&mut r, dag, 2);
        let f = r.gen_range(0.0..0.8);
        let e = random_evidence(&mut r, &bn, f);
        let en = e.nodes();
        let d = decompose(&bn, &e).unwrap();
        subsets_seen += d.subsets.len();
        let mut ok = certify(bn.dag(), &en, &d.subsets);
        let reference: BTreeSet<NodeSet> = d.subsets.iter().cloned().collect();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut r);
            let mut inverse = vec![0; n];
            for (a, &b) in perm.iter().enumerate() {
                inverse[b] = a;
            }
            let edges: Vec<_> = bn.dag().edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            let pdag = Dag::new(n, &edges).unwrap();
            let pe: NodeSet = en.iter().map(|&v| perm[v]).collect();
            let back: BTreeSet<NodeSet> = partition(&pdag, &pe)
                .iter()
                .map(|s| s.iter().map(|&v| inverse[v]).collect())
                .collect();
            ok &= back == reference;
        }
        failures += usize::from(!ok);
    }
    outcome(
        failures == 0,
        format!("500 (dag, e) pairs, {subsets_seen} subsets, 10 relabelings each: {failures} failures"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    const N_MAX: usize = 8;
    const RUNS: u64 = 200;
    let cfg = SgsConfig { n_max: N_MAX, ..Default::default() };
    let mut instances = Vec::new();
    let mut seed = 40_000u64;
    while instances.len() < 20 {
        let spec = GenSpec::new(Family::ErdosRenyi, 30, 3.0, 2, 0.3, seed);
        seed += 1;
        let Ok(inst) = Instance::generate(&spec, &cfg) else { continue };
        let d = decompose(&inst.bn, &inst.evidence).unwrap();
        let exact = d.subsets.iter().any(|s| s.len() < N_MAX);
        let approx = d.subsets.iter().any(|s| s.len() >= N_MAX);
        if exact && approx {
            instances.push(inst);
        }
    }
    let results: Vec<(bool, f64)> = instances
        .par_iter()
        .map(|inst| {
            let ratios: Vec<f64> = (0..RUNS)
                .map(|k| {
                    let mut c = cfg.clone();
                    c.sampler.samples = 2000;
                    c.sampler.seed = derive(inst.spec.seed, k);
                    let est = marginal(&inst.bn, &inst.evidence, Method::Sgs, &c).unwrap();
                    debug_assert!(est.per_subset.iter().any(|s| s.method == SubsetMethod::Approx));
                    (est.log_value - inst.log_truth).exp()
                })
                .collect();
            let m = ratios.iter().sum::<f64>() / RUNS as f64;
            let var = ratios.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (RUNS - 1) as f64;
            let se = (var / RUNS as f64).sqrt();
            let z = if se > 0.0 { (m - 1.0).abs() / se } else if m == 1.0 { 0.0 } else { f64::INFINITY };
            (z <= 4.0, z)
        })
        .collect();
    let within = results.iter().filter(|r| r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        within >= 19,
        format!("mean of 200 SGS runs (M=2000) within 4 SE of truth on {within}/20 mixed instances, largest |z| {worst:.2}"),
    )
}

// ---------------------------------------------------------------- 5, 6, 7

struct FamilyStats {
    var_ok: usize,
    order_ok: usize,
    medians: [f64; 3],
    median_ratio: f64,
    mean_ratio: f64,
    count: usize,
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn family_stats(family: Family) -> FamilyStats {
    const INSTANCES: u64 = 100;
    const REPS: usize = 30;
    const BUDGET: usize = 1000;
    let cfg = SgsConfig::default();
    let per: Vec<(f64, f64, [f64; 3])> = (0..INSTANCES)
        .into_par_iter()
        .map(|i| {
            let spec = GenSpec::new(family, 50, 3.3, 2, 0.5, 50_000 + i);
            let inst = Instance::generate(&spec, &cfg).unwrap();
            let runs = |m: Method| -> Vec<f64> {
                (0..REPS)
                    .map(|k| (inst.estimate(m, BUDGET, k, &cfg).unwrap().0 - inst.log_truth).exp())
                    .collect()
            };
            let (s, l, g) = (runs(Method::Sgs), runs(Method::LbpIs), runs(Method::Gs));
            let errs = [nrmse(1.0, &s).unwrap(), nrmse(1.0, &l).unwrap(), nrmse(1.0, &g).unwrap()];
            (sample_var(&s), sample_var(&l), errs)
        })
        .collect();
    let ratios: Vec<f64> = per
        .iter()
        .map(|(vs, vl, _)| if *vl > 0.0 { vs / vl } else if *vs == 0.0 { 1.0 } else { f64::INFINITY })
        .collect();
    FamilyStats {
        var_ok: per.iter().filter(|(vs, vl, _)| vs <= vl).count(),
        order_ok: per.iter().filter(|(_, _, e)| e[0] <= e[1] && e[1] <= e[2]).count(),
        medians: [0, 1, 2].map(|k| median(per.iter().map(|p| p.2[k]).collect())),
        median_ratio: median(ratios.clone()),
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        count: per.len(),
    }
}

fn criteria_5_6_7() -> (Outcome, Outcome, Outcome) {
    let fams = [Family::ErdosRenyi, Family::BarabasiAlbert, Family::WattsStrogatz, Family::ErIslands];
    let stats: Vec<FamilyStats> = fams.iter().map(|&f| family_stats(f)).collect();
    let er = &stats[0];
    let c5 = outcome(
        er.var_ok * 100 >= 95 * er.count,
        format!("ER n=50: var(SGS) <= var(LBP-IS) on {}/{} instances", er.var_ok, er.count),
    );
    let [ms, ml, mg] = er.medians;
    let c6 = outcome(
        ms <= ml && ml <= mg && er.order_ok * 10 >= 7 * er.count,
        format!(
            "median NRMSE SGS {ms:.4} <= LBP-IS {ml:.4} <= GS {mg:.4}; per-instance order on {}/{}",
            er.order_ok, er.count
        ),
    );
    let others_ok = stats[1..].iter().all(|s| s.var_ok * 100 >= 95 * s.count);
    let islands = &stats[3];
    let islands_best = stats[..3].iter().all(|s| islands.median_ratio <= s.median_ratio);
    let desc: Vec<String> = fams
        .iter()
        .zip(&stats)
        .map(|(f, s)| format!("{} {}/{} median ratio {:.3} mean {:.3}", f.as_str(), s.var_ok, s.count, s.median_ratio, s.mean_ratio))
        .collect();
    let c7 = outcome(others_ok && islands_best, format!("var(SGS)/var(LBP-IS): {}", desc.join("; ")));
    (c5, c6, c7)
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let cfg = StudyConfig::default();
    let outs: Vec<_> = (0..10u64).into_par_iter().map(|s| synthetic_study(&cfg, s).unwrap()).collect();
    let am = outs.iter().map(|o| o.accuracy_marginalized).sum::<f64>() / 10.0;
    let ad = outs.iter().map(|o| o.accuracy_dropped).sum::<f64>() / 10.0;
    let wins = outs.iter().filter(|o| o.auc_marginalized >= o.auc_dropped).count();
    outcome(
        am > ad && wins >= 7,
        format!("mean accuracy marginalized {am:.4} vs dropped {ad:.4}; AUC(marg) >= AUC(drop) in {wins}/10 seeds"),
    )
}

// ---------------------------------------------------------------- 9

fn drop_column(csv: &str, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let Some(col) = header.iter().position(|h| *h == name) else { return csv.to_string() };
    std::iter::once(header)
        .chain(lines.map(|l| l.split(',').collect()))
        .map(|cells: Vec<&str>| {
            cells.iter().enumerate().filter(|(i, _)| *i != col).map(|(_, c)| *c).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_9(dir: &Path) -> Outcome {
    let d = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let fig = d("fig.toml");
    std::fs::write(&fig, serialize_network(&figure_network(9))).unwrap();
    let big = d("big.toml");
    let inst = Instance::generate(&GenSpec::new(Family::ErIslands, 40, 3.3, 2, 0.3, 77), &SgsConfig::default()).unwrap();
    std::fs::write(&big, serialize_network(&inst.bn)).unwrap();
    let big_ev = format_evidence(&inst.bn, &inst.evidence);
    let spec = d("spec.toml");
    std::fs::write(
        &spec,
        "[[instance]]\nfamily = \"er\"\nn = 25\navg_mb_size = 3.0\ncategories = 2\nevidence_fraction = 0.5\nseed = 5\ncount = 2\n",
    )
    .unwrap();
    let m1 = d("one.toml");
    let m2 = d("two.toml");
    let data = d("records.csv");
    {
        let cfg = StudyConfig { n: 15, ..Default::default() };
        let models = sgs::classify::study_models(&cfg, 3).unwrap();
        std::fs::write(&m1, serialize_network(&models[0])).unwrap();
        std::fs::write(&m2, serialize_network(&models[1])).unwrap();
        // the same columns are missing in every record, so --drop-missing has something left
        let mut r = rng(9);
        let hidden: Vec<bool> = (0..models[0].len()).map(|_| r.gen_bool(0.4)).collect();
        let mut csv = models[0].names().join(",") + ",label\n";
        for (k, bn) in models.iter().enumerate() {
            for x in bn.sample_forward(20, k as u64) {
                let cells: Vec<String> = (0..bn.len())
                    .map(|v| if hidden[v] { "?".to_string() } else { bn.states(v)[x[v]].clone() })
                    .collect();
                csv += &format!("{},{}\n", cells.join(","), ["one", "two"][k]);
            }
        }
        std::fs::write(&data, csv).unwrap();
    }
    let models = format!("{m1},{m2}");

    // (label, args, output file or "" for stdout, column to ignore)
    let cases: Vec<(&str, Vec<String>, String, &str)> = vec![
        ("validate", vec!["validate".into(), "--network".into(), big.clone()], String::new(), ""),
        ("decompose", vec!["decompose".into(), "--network".into(), fig.clone(), "--evidence".into(), "E=yes,N=no,O=no".into()], String::new(), ""),
        ("marginal sgs", vec!["marginal".into(), "--network".into(), big.clone(), "--evidence".into(), big_ev.clone(), "--n-max".into(), "4".into(), "--seed".into(), "11".into()], String::new(), ""),
        ("marginal lbp-is", vec!["marginal".into(), "--network".into(), big.clone(), "--evidence".into(), big_ev.clone(), "--method".into(), "lbp-is".into(), "--json".into()], String::new(), ""),
        ("marginal gs", vec!["marginal".into(), "--network".into(), big.clone(), "--evidence".into(), big_ev.clone(), "--method".into(), "gs".into(), "--samples".into(), "500".into()], String::new(), ""),
        ("simulate", vec!["simulate".into(), "--family".into(), "ws".into(), "--n".into(), "30".into(), "--mb-size".into(), "3".into(), "--seed".into(), "4".into(), "--out".into(), d("sim.toml")], d("sim.toml"), ""),
        ("benchmark", vec!["benchmark".into(), "--spec".into(), spec.clone(), "--budgets".into(), "100,400".into(), "--reps".into(), "5".into(), "--out".into(), d("bench.csv")], d("bench.csv"), "wall_time_ms"),
        ("classify", vec!["classify".into(), "--models".into(), models.clone(), "--data".into(), data.clone(), "--label-column".into(), "label".into(), "--n-max".into(), "5".into(), "--out".into(), d("cls.csv")], d("cls.csv"), ""),
        ("classify drop", vec!["classify".into(), "--models".into(), models, "--data".into(), data, "--drop-missing".into(), "--out".into(), d("drop.csv")], d("drop.csv"), ""),
    ];
    let mut bad = Vec::new();
    for (label, args, file, ignore) in &cases {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut outputs = Vec::new();
        for _ in 0..3 {
            let o = cli(&argv);
            if !o.status.success() {
                bad.push(format!("{label} failed: {}", String::from_utf8_lossy(&o.stderr).trim()));
                break;
            }
            let primary = if file.is_empty() {
                String::from_utf8_lossy(&o.stdout).into_owned()
            } else {
                std::fs::read_to_string(file).unwrap()
            };
            outputs.push(if ignore.is_empty() { primary } else { drop_column(&primary, ignore) });
        }
        if outputs.len() == 3 && !(outputs[0] == outputs[1] && outputs[1] == outputs[2]) {
            bad.push(format!("{label} differs between runs"));
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} invocations x 3 runs byte-identical (benchmark compared without wall_time_ms)", cases.len())
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------- 10

const VAR_A: &str = "[[variable]]\nname = \"A\"\nstates = [\"t\", \"f\"]\ncpt = [0.5, 0.5]\n";

fn malformed_networks() -> Vec<(&'static str, ErrorKind, String)> {
    let var = |body: &str| format!("[[variable]]\n{body}\n");
    vec![
        ("unclosed table header", ErrorKind::Syntax, "[[variable]\nname = \"A\"\n".to_string()),
        ("missing cpt", ErrorKind::MissingField, var("name = \"A\"\nstates = [\"t\", \"f\"]")),
        ("states not a list", ErrorKind::WrongType, var("name = \"A\"\nstates = 2\ncpt = [0.5, 0.5]")),
        ("unknown key", ErrorKind::UnknownField, var("name = \"A\"\nstates = [\"t\", \"f\"]\ncpt = [0.5, 0.5]\ncolour = \"red\"")),
        ("no variables", ErrorKind::EmptyNetwork, "# nothing here\n".to_string()),
        ("comma in name", ErrorKind::InvalidName, var("name = \"A,B\"\nstates = [\"t\", \"f\"]\ncpt = [0.5, 0.5]")),
        ("name twice", ErrorKind::DuplicateName, format!("{VAR_A}{VAR_A}")),
        ("single state", ErrorKind::TooFewStates, var("name = \"A\"\nstates = [\"t\"]\ncpt = [1.0]")),
        ("reserved state", ErrorKind::InvalidState, var("name = \"A\"\nstates = [\"t\", \"?\"]\ncpt = [0.5, 0.5]")),
        ("state twice", ErrorKind::DuplicateState, var("name = \"A\"\nstates = [\"t\", \"t\"]\ncpt = [0.5, 0.5]")),
        ("unknown parent", ErrorKind::UnresolvedParent, var("name = \"A\"\nstates = [\"t\", \"f\"]\nparents = [\"Z\"]\ncpt = [0.5, 0.5, 0.5, 0.5]")),
        (
            "parent twice",
            ErrorKind::DuplicateParent,
            format!("{VAR_A}{}", var("name = \"B\"\nstates = [\"t\", \"f\"]\nparents = [\"A\", \"A\"]\ncpt = [0.5, 0.5, 0.5, 0.5]")),
        ),
        (
            "two-node cycle",
            ErrorKind::Cycle,
            format!(
                "{}{}",
                var("name = \"A\"\nstates = [\"t\", \"f\"]\nparents = [\"B\"]\ncpt = [0.5, 0.5, 0.5, 0.5]"),
                var("name = \"B\"\nstates = [\"t\", \"f\"]\nparents = [\"A\"]\ncpt = [0.5, 0.5, 0.5, 0.5]")
            ),
        ),
        (
            "short cpt",
            ErrorKind::CptLength,
            format!("{VAR_A}{}", var("name = \"B\"\nstates = [\"t\", \"f\"]\nparents = [\"A\"]\ncpt = [0.5, 0.5]")),
        ),
        ("negative entry", ErrorKind::ProbabilityRange, var("name = \"A\"\nstates = [\"t\", \"f\"]\ncpt = [1.5, -0.5]")),
        ("row sums to 1.1", ErrorKind::RowSum, var("name = \"A\"\nstates = [\"t\", \"f\"]\ncpt = [0.5, 0.6]")),
    ]
}

fn malformed_datasets() -> Vec<(&'static str, ErrorKind, String)> {
    vec![
        ("short row", ErrorKind::RaggedRow, "A,B\nt,f\nt\n".to_string()),
        ("column twice", ErrorKind::DuplicateColumn, "A,A\nt,f\n".to_string()),
        ("no header", ErrorKind::EmptyDataset, String::new()),
        ("unknown state cell", ErrorKind::UnknownState, "A,B\nt,f\nmaybe,t\n".to_string()),
    ]
}

fn generated_networks() -> Vec<CategoricalBN> {
    let fams = [Family::ErdosRenyi, Family::BarabasiAlbert, Family::WattsStrogatz, Family::ErIslands];
    (0..200u64)
        .map(|i| {
            if i % 2 == 0 {
                let spec = GenSpec::new(fams[(i / 2 % 4) as usize], 10 + (i % 30) as usize, 2.5, 2 + (i % 3) as usize, 0.0, i);
                let dag = sgs::bench::gen_dag(&spec).unwrap();
                sgs::bench::gen_cpts(dag, spec.categories, i).unwrap()
            } else {
                let mut r = rng(derive(10, i));
                random_bn(&mut r, 1 + (i % 15) as usize, 0.4, 3, 4)
            }
        })
        .collect()
}

fn criterion_10(dir: &Path) -> Outcome {
    let nets = generated_networks();
    let fixed = nets
        .iter()
        .filter(|bn| {
            let a = serialize_network(bn);
            parse_network(&a).map(|b| serialize_network(&b) == a).unwrap_or(false)
        })
        .count();

    let model = dir.join("model.toml");
    std::fs::write(&model, format!("{VAR_A}{}", VAR_A.replace("\"A\"", "\"B\""))).unwrap();
    let other = dir.join("other.toml");
    std::fs::copy(&model, &other).unwrap();
    let models = format!("{},{}", model.display(), other.display());
    let model = model.to_str().unwrap().to_string();
    let mut mismatches = Vec::new();
    let mut designated = BTreeSet::new();
    let nets_bad = malformed_networks();
    let data_bad = malformed_datasets();
    for (i, (label, kind, text)) in nets_bad.iter().enumerate() {
        designated.insert(kind.code());
        let lib = parse_network(text).err().map(|e| e.kind);
        let path = dir.join(format!("bad{i}.toml"));
        std::fs::write(&path, text).unwrap();
        let o = cli(&["marginal", "--network", path.to_str().unwrap()]);
        let code = serde_json::from_slice::<serde_json::Value>(&o.stderr)
            .ok()
            .and_then(|v| v["error"].as_str().map(str::to_string));
        if lib != Some(*kind) || o.status.code() != Some(1) || code.as_deref() != Some(kind.code()) {
            mismatches.push(format!("{label}: got {lib:?} / {code:?}"));
        }
    }
    for (i, (label, kind, text)) in data_bad.iter().enumerate() {
        designated.insert(kind.code());
        let path = dir.join(format!("bad{i}.csv"));
        std::fs::write(&path, text).unwrap();
        let lib = match Dataset::parse(text) {
            Err(e) => Some(e.kind),
            Ok(d) => sgs::classify::PartialRecord::from_dataset(&d, d.rows.len() - 1, None)
                .evidence_for(&parse_network(&std::fs::read_to_string(&model).unwrap()).unwrap())
                .err()
                .map(|e| e.kind),
        };
        let o = cli(&["classify", "--models", &models, "--data", path.to_str().unwrap()]);
        let code = serde_json::from_slice::<serde_json::Value>(&o.stderr)
            .ok()
            .and_then(|v| v["error"].as_str().map(str::to_string));
        if lib != Some(*kind) || o.status.code() != Some(1) || code.as_deref() != Some(kind.code()) {
            mismatches.push(format!("{label}: got {lib:?} / {code:?}"));
        }
    }
    let files = nets_bad.len() + data_bad.len();
    let distinct = designated.len() == files;
    outcome(
        fixed == nets.len() && mismatches.is_empty() && distinct && files == 20,
        format!(
            "{fixed}/{} networks at a serialize-parse fixed point; {}/{files} malformed files give their designated class ({} distinct classes){}",
            nets.len(),
            files - mismatches.len(),
            designated.len(),
            if mismatches.is_empty() { String::new() } else { format!("; {}", mismatches.join("; ")) }
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let t = Instant::now();

    let corpus = exactness_corpus(dir.path());
    let (c1, c2) = criteria_1_2(&corpus);
    results.push((1, "exactness chain", c1));
    results.push((2, "junction-tree baseline", c2));
    results.push((3, "decomposition certification", criterion_3()));
    results.push((4, "unbiasedness", criterion_4()));
    let (c5, c6, c7) = criteria_5_6_7();
    results.push((5, "variance reduction", c5));
    results.push((6, "method ordering", c6));
    results.push((7, "graph-family robustness", c7));
    results.push((8, "classification study", criterion_8()));
    results.push((9, "determinism", criterion_9(dir.path())));
    results.push((10, "parser", criterion_10(dir.path())));

    println!();
    for (k, name, o) in &results {
        println!("[{}] criterion {k:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "\nacceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        t.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
