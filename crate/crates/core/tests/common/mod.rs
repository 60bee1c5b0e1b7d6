//! Shared fixtures and brute-force oracles. Nothing here calls the library's
//! own inference or graph algorithms.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgs::graph::{Dag, NodeId, NodeSet};
use sgs::model::{CategoricalBN, Evidence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random DAG on `n` nodes: a hidden random order, each forward pair joined
/// with probability `p`, at most `max_parents` parents per node.
pub fn random_dag(r: &mut ChaCha8Rng, n: usize, p: f64, max_parents: usize) -> Dag {
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(r);
    let mut edges = Vec::new();
    for j in 1..n {
        let mut cands: Vec<usize> = (0..j).collect();
        cands.shuffle(r);
        let mut k = 0;
        for i in cands {
            if k < max_parents && r.gen_bool(p) {
                edges.push((order[i], order[j]));
                k += 1;
            }
        }
    }
    Dag::new(n, &edges).unwrap()
}

/// Random CPT rows, with the occasional near-deterministic entry.
pub fn random_tables(r: &mut ChaCha8Rng, dag: &Dag, cards: &[usize]) -> Vec<Vec<f64>> {
    dag.nodes()
        .map(|v| {
            let rows: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
            let mut t = Vec::with_capacity(rows * cards[v]);
            for _ in 0..rows {
                let mut row: Vec<f64> = (0..cards[v])
                    .map(|_| if r.gen_bool(0.05) { 1e-4 } else { r.gen_range(0.05..1.0) })
                    .collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
                t.extend(row);
            }
            t
        })
        .collect()
}

pub fn random_bn(r: &mut ChaCha8Rng, n: usize, p: f64, max_parents: usize, max_card: usize) -> CategoricalBN {
    let dag = random_dag(r, n, p, max_parents);
    let cards: Vec<usize> = (0..n).map(|_| r.gen_range(2..=max_card)).collect();
    let tables = random_tables(r, &dag, &cards);
    CategoricalBN::from_cardinalities(dag, &cards, tables).unwrap()
}

pub fn with_cardinality(r: &mut ChaCha8Rng, dag: Dag, c: usize) -> CategoricalBN {
    let cards = vec![c; dag.len()];
    let tables = random_tables(r, &dag, &cards);
    CategoricalBN::from_cardinalities(dag, &cards, tables).unwrap()
}

/// `round(f * n)` distinct evidence nodes with uniformly chosen states.
pub fn random_evidence(r: &mut ChaCha8Rng, bn: &CategoricalBN, f: f64) -> Evidence {
    let n = bn.len();
    let k = ((f * n as f64).round() as usize).min(n);
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(r);
    let mut e = Evidence::new();
    for &v in &nodes[..k] {
        e.insert(v, r.gen_range(0..bn.cardinality(v)));
    }
    e
}

/// Row index of `v`'s CPT for joint state `x`, parents in ascending id order,
/// last parent fastest.
fn row_of(bn: &CategoricalBN, v: NodeId, x: &[usize]) -> usize {
    let mut row = 0;
    for &p in bn.dag().parents(v) {
        row = row * bn.cardinality(p) + x[p];
    }
    row
}

/// `P(X_e)` summed over every joint configuration consistent with `e`.
pub fn brute_force_marginal(bn: &CategoricalBN, e: &Evidence) -> f64 {
    let n = bn.len();
    let mut x = vec![0usize; n];
    let free: Vec<NodeId> = (0..n).filter(|&v| e.get(v).is_none()).collect();
    for (v, s) in e.iter() {
        x[v] = s;
    }
    let mut total = 0.0;
    loop {
        let mut p = 1.0;
        for v in 0..n {
            let c = bn.cardinality(v);
            p *= bn.cpt(v).table()[row_of(bn, v, &x) * c + x[v]];
        }
        total += p;
        let mut i = free.len();
        loop {
            if i == 0 {
                return total;
            }
            i -= 1;
            let v = free[i];
            x[v] += 1;
            if x[v] < bn.cardinality(v) {
                break;
            }
            x[v] = 0;
        }
    }
}

fn parents_of(dag: &Dag) -> Vec<Vec<NodeId>> {
    dag.nodes().map(|v| dag.parents(v).to_vec()).collect()
}

/// Ancestral closure (inclusive) by repeated parent lookups.
pub fn ancestral(dag: &Dag, set: &NodeSet) -> NodeSet {
    let parents = parents_of(dag);
    let mut out = set.clone();
    let mut stack: Vec<NodeId> = set.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &p in &parents[v] {
            if out.insert(p) {
                stack.push(p);
            }
        }
    }
    out
}

/// d-separation by the moralized ancestral graph criterion: `a` and `b` are
/// separated by `z` iff no path joins them in the moral graph of
/// `An(a ∪ b ∪ z)` once `z` is removed.
pub fn d_separated_oracle(dag: &Dag, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> bool {
    let parents = parents_of(dag);
    let all: NodeSet = a.iter().chain(b).chain(z).copied().collect();
    let anc = ancestral(dag, &all);
    let n = dag.len();
    let mut adj = vec![BTreeSet::new(); n];
    for &v in &anc {
        let ps = &parents[v];
        for &p in ps {
            adj[v].insert(p);
            adj[p].insert(v);
        }
        for (i, &p) in ps.iter().enumerate() {
            for &q in &ps[i + 1..] {
                adj[p].insert(q);
                adj[q].insert(p);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    for &v in a {
        seen[v] = true;
        queue.push_back(v);
    }
    while let Some(v) = queue.pop_front() {
        if b.contains(&v) {
            return false;
        }
        for &u in &adj[v] {
            if !seen[u] && anc.contains(&u) && !z.contains(&u) {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    true
}

pub const FIGURE_NAMES: [&str; 15] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N", "O"];

/// Fifteen-node example network (binary, random CPTs) in which evidence on
/// E, N and O leaves two independent subsets, {A, B} and {G, J, K, L}, while
/// C, D, F, H, I and M are irrelevant.
pub fn figure_network(seed: u64) -> CategoricalBN {
    let id = |s: &str| FIGURE_NAMES.iter().position(|&n| n == s).unwrap();
    let edges: Vec<(NodeId, NodeId)> = [
        ("A", "B"),
        ("A", "E"),
        ("B", "E"),
        ("E", "G"),
        ("G", "J"),
        ("J", "N"),
        ("K", "N"),
        ("K", "L"),
        ("L", "O"),
        ("A", "C"),
        ("C", "D"),
        ("E", "F"),
        ("F", "H"),
        ("J", "I"),
        ("L", "M"),
    ]
    .iter()
    .map(|(a, b)| (id(a), id(b)))
    .collect();
    let dag = Dag::new(15, &edges).unwrap();
    let mut r = rng(seed);
    let cards = vec![2; 15];
    let tables = random_tables(&mut r, &dag, &cards);
    let names = FIGURE_NAMES.iter().map(|s| s.to_string()).collect();
    let states = vec![vec!["yes".to_string(), "no".to_string()]; 15];
    CategoricalBN::new(dag, names, states, tables).unwrap()
}

pub fn names(bn: &CategoricalBN, set: &NodeSet) -> Vec<String> {
    set.iter().map(|&v| bn.name(v).to_string()).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
