//! Categorical Bayesian networks: conditional probability tables, joint
//! probabilities, ancestral sampling and brute-force marginals.
//!
//! CPT layout: one row per parent configuration, one column per state. Rows
//! are enumerated mixed-radix over the parents in ascending node-id order with
//! the last parent least significant.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Dag, GraphError, NodeId, NodeSet};
use crate::numeric::{sample_categorical, LogSum};

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default limit on brute-force enumeration, in binary-equivalent variables
/// (log2 of the number of configurations summed over).
pub const DEFAULT_ENUMERATION_BITS: f64 = 22.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("expected {expected} entries for {what}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("network has {} invalid CPT entries or rows", .0.len())]
    Invalid(Vec<Violation>),
    #[error("evidence on unknown node {0}")]
    EvidenceNode(NodeId),
    #[error("evidence state {state} out of range for node {node} with {cardinality} states")]
    EvidenceState {
        node: NodeId,
        state: usize,
        cardinality: usize,
    },
    #[error("assignment covers {actual} of {expected} nodes")]
    IncompleteAssignment { expected: usize, actual: usize },
    #[error("state {state} out of range for node {node}")]
    StateOutOfRange { node: NodeId, state: usize },
    #[error("enumeration over {bits:.1} binary-equivalent variables exceeds the cap of {cap}")]
    EnumerationCapacity { bits: f64, cap: f64 },
    #[error("node set is not closed under parents (node {0} has a missing parent)")]
    NotAncestral(NodeId),
}

/// A single defect found by [`CategoricalBN::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cardinality { node: NodeId, states: usize },
    TableShape { node: NodeId, expected: usize, actual: usize },
    RowNormalization { node: NodeId, row: usize, sum: f64 },
    OutOfRange { node: NodeId, row: usize, state: usize, value: f64 },
}

impl Violation {
    pub fn node(&self) -> NodeId {
        match *self {
            Violation::Cardinality { node, .. }
            | Violation::TableShape { node, .. }
            | Violation::RowNormalization { node, .. }
            | Violation::OutOfRange { node, .. } => node,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Cardinality { .. } => "cardinality",
            Violation::TableShape { .. } => "table-shape",
            Violation::RowNormalization { .. } => "row-normalization",
            Violation::OutOfRange { .. } => "out-of-range",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Cardinality { node, states } => {
                write!(f, "node {node}: cardinality: {states} states, need at least 2")
            }
            Violation::TableShape { node, expected, actual } => {
                write!(f, "node {node}: table-shape: expected {expected} entries, got {actual}")
            }
            Violation::RowNormalization { node, row, sum } => {
                write!(f, "node {node} row {row}: row-normalization: sums to {sum}")
            }
            Violation::OutOfRange { node, row, state, value } => {
                write!(f, "node {node} row {row} state {state}: out-of-range: {value}")
            }
        }
    }
}

/// Observed states for a subset of nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Evidence(BTreeMap<NodeId, usize>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, state: usize) -> Option<usize> {
        self.0.insert(node, state)
    }

    pub fn get(&self, node: NodeId) -> Option<usize> {
        self.0.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nodes(&self) -> NodeSet {
        self.0.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// Restricted to the nodes listed in `map` (new id → old id) and renumbered.
    pub fn remap(&self, map: &[NodeId]) -> Evidence {
        map.iter()
            .enumerate()
            .filter_map(|(new, &old)| self.get(old).map(|s| (new, s)))
            .collect()
    }
}

impl FromIterator<(NodeId, usize)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (NodeId, usize)>>(iter: I) -> Self {
        Evidence(iter.into_iter().collect())
    }
}

/// Conditional probability table of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    cardinality: usize,
    parent_cards: Vec<usize>,
    table: Vec<f64>,
}

impl Cpt {
    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn rows(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.table[r * self.cardinality..(r + 1) * self.cardinality]
    }
}

/// A DAG with named categorical variables and one CPT per node.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalBN {
    dag: Dag,
    names: Vec<String>,
    states: Vec<Vec<String>>,
    cpts: Vec<Cpt>,
}

impl CategoricalBN {
    /// Builds and validates a network; any [`Violation`] is an error.
    pub fn new(
        dag: Dag,
        names: Vec<String>,
        states: Vec<Vec<String>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let bn = Self::new_unchecked(dag, names, states, tables)?;
        let violations = bn.validate();
        if violations.is_empty() {
            Ok(bn)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Builds a network without checking CPT contents; only the per-node
    /// vector lengths must agree. Use [`validate`](Self::validate) afterwards.
    pub fn new_unchecked(
        dag: Dag,
        names: Vec<String>,
        states: Vec<Vec<String>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let n = dag.len();
        for (what, actual) in [
            ("node names", names.len()),
            ("state lists", states.len()),
            ("CPTs", tables.len()),
        ] {
            if actual != n {
                return Err(ModelError::Shape { what, expected: n, actual });
            }
        }
        let cpts = tables
            .into_iter()
            .enumerate()
            .map(|(v, table)| Cpt {
                cardinality: states[v].len(),
                parent_cards: dag.parents(v).iter().map(|&p| states[p].len()).collect(),
                table,
            })
            .collect();
        Ok(CategoricalBN { dag, names, states, cpts })
    }

    /// Network with generated names `X0, X1, ...` and states `0, 1, ...`.
    pub fn from_cardinalities(
        dag: Dag,
        cardinalities: &[usize],
        tables: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let names = (0..dag.len()).map(|v| format!("X{v}")).collect();
        let states = cardinalities
            .iter()
            .map(|&c| (0..c).map(|s| s.to_string()).collect())
            .collect();
        Self::new(dag, names, states, tables)
    }

    /// Every invariant violation, in node order. Empty iff the network is
    /// well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (v, cpt) in self.cpts.iter().enumerate() {
            if cpt.cardinality < 2 {
                out.push(Violation::Cardinality { node: v, states: cpt.cardinality });
                continue;
            }
            let expected = cpt.rows() * cpt.cardinality;
            if cpt.table.len() != expected {
                out.push(Violation::TableShape {
                    node: v,
                    expected,
                    actual: cpt.table.len(),
                });
                continue;
            }
            for r in 0..cpt.rows() {
                let row = cpt.row(r);
                let mut bad_entry = false;
                for (s, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::OutOfRange { node: v, row: r, state: s, value: p });
                        bad_entry = true;
                    }
                }
                let sum: f64 = row.iter().sum();
                if !bad_entry && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Violation::RowNormalization { node: v, row: r, sum });
                }
            }
        }
        out
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn len(&self) -> usize {
        self.dag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dag.is_empty()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn states(&self, v: NodeId) -> &[String] {
        &self.states[v]
    }

    pub fn state_by_name(&self, v: NodeId, state: &str) -> Option<usize> {
        self.states[v].iter().position(|s| s == state)
    }

    pub fn cardinality(&self, v: NodeId) -> usize {
        self.cpts[v].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.cpts.iter().map(|c| c.cardinality).collect()
    }

    pub fn cpt(&self, v: NodeId) -> &Cpt {
        &self.cpts[v]
    }

    /// Row of `v`'s CPT selected by the parent states in `x`.
    pub fn row_index(&self, v: NodeId, x: &[usize]) -> usize {
        self.row_index_with(v, |p| x[p])
    }

    pub fn row_index_with(&self, v: NodeId, state_of: impl Fn(NodeId) -> usize) -> usize {
        self.dag
            .parents(v)
            .iter()
            .zip(&self.cpts[v].parent_cards)
            .fold(0, |acc, (&p, &card)| acc * card + state_of(p))
    }

    /// `P(X_v = x[v] | X_pa(v) = x[pa(v)])`.
    pub fn prob(&self, v: NodeId, x: &[usize]) -> f64 {
        let cpt = &self.cpts[v];
        cpt.table[self.row_index(v, x) * cpt.cardinality + x[v]]
    }

    pub fn prob_with(&self, v: NodeId, state_of: impl Fn(NodeId) -> usize) -> f64 {
        let cpt = &self.cpts[v];
        let state = state_of(v);
        cpt.table[self.row_index_with(v, &state_of) * cpt.cardinality + state]
    }

    pub fn check_evidence(&self, e: &Evidence) -> Result<(), ModelError> {
        for (v, s) in e.iter() {
            if v >= self.len() {
                return Err(ModelError::EvidenceNode(v));
            }
            if s >= self.cardinality(v) {
                return Err(ModelError::EvidenceState {
                    node: v,
                    state: s,
                    cardinality: self.cardinality(v),
                });
            }
        }
        Ok(())
    }

    fn check_assignment(&self, x: &[usize]) -> Result<(), ModelError> {
        if x.len() != self.len() {
            return Err(ModelError::IncompleteAssignment {
                expected: self.len(),
                actual: x.len(),
            });
        }
        match x.iter().enumerate().find(|&(v, &s)| s >= self.cardinality(v)) {
            Some((node, &state)) => Err(ModelError::StateOutOfRange { node, state }),
            None => Ok(()),
        }
    }

    pub fn joint_log_probability(&self, x: &[usize]) -> Result<f64, ModelError> {
        self.check_assignment(x)?;
        Ok(self.dag.nodes().map(|v| self.prob(v, x).ln()).sum())
    }

    /// Product of all CPT entries selected by the complete assignment `x`.
    pub fn joint_probability(&self, x: &[usize]) -> Result<f64, ModelError> {
        self.check_assignment(x)?;
        Ok(self.dag.nodes().map(|v| self.prob(v, x)).product())
    }

    /// log2 of the number of configurations of the nodes outside `e`.
    pub fn free_configuration_bits(&self, e: &Evidence) -> f64 {
        self.dag
            .nodes()
            .filter(|&v| !e.contains(v))
            .map(|v| (self.cardinality(v) as f64).log2())
            .sum()
    }

    /// `log P(X_e)` by summing the joint over every configuration of the
    /// remaining nodes.
    pub fn enumerate_log_marginal(&self, e: &Evidence, cap_bits: f64) -> Result<f64, ModelError> {
        self.check_evidence(e)?;
        let bits = self.free_configuration_bits(e);
        if bits > cap_bits + 1e-9 {
            return Err(ModelError::EnumerationCapacity { bits, cap: cap_bits });
        }
        let free: Vec<NodeId> = self.dag.nodes().filter(|&v| !e.contains(v)).collect();
        let mut x = vec![0usize; self.len()];
        for (v, s) in e.iter() {
            x[v] = s;
        }
        let mut acc = LogSum::new();
        loop {
            acc.add(self.dag.nodes().map(|v| self.prob(v, &x).ln()).sum());
            // odometer, last free node fastest
            let mut carry = true;
            for &v in free.iter().rev() {
                x[v] += 1;
                if x[v] < self.cardinality(v) {
                    carry = false;
                    break;
                }
                x[v] = 0;
            }
            if carry {
                break;
            }
        }
        Ok(acc.value())
    }

    pub fn enumerate_marginal(&self, e: &Evidence) -> Result<f64, ModelError> {
        self.enumerate_log_marginal(e, DEFAULT_ENUMERATION_BITS).map(f64::exp)
    }

    /// `n` ancestral samples; identical seeds give identical samples.
    pub fn sample_forward(&self, n: usize, seed: u64) -> Vec<Vec<usize>> {
        let order = self
            .dag
            .topological_order()
            .expect("Dag construction guarantees acyclicity");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut x = vec![0usize; self.len()];
                for &v in &order {
                    let row = self.cpts[v].row(self.row_index(v, &x));
                    x[v] = sample_categorical(row, rng.gen::<f64>());
                }
                x
            })
            .collect()
    }

    /// Restriction to a parent-closed node set, reindexed in ascending id
    /// order. Returns the subnetwork and the new → original id map.
    pub fn subnetwork(&self, keep: &NodeSet) -> Result<(CategoricalBN, Vec<NodeId>), ModelError> {
        for &v in keep {
            if v >= self.len() {
                return Err(GraphError::UnknownNode(v).into());
            }
            if self.dag.parents(v).iter().any(|p| !keep.contains(p)) {
                return Err(ModelError::NotAncestral(v));
            }
        }
        let (dag, map) = self.dag.induced(keep);
        let names = map.iter().map(|&v| self.names[v].clone()).collect();
        let states = map.iter().map(|&v| self.states[v].clone()).collect();
        let cpts = map.iter().map(|&v| self.cpts[v].clone()).collect();
        Ok((CategoricalBN { dag, names, states, cpts }, map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // A -> B, P(A=1) = 0.3, P(B=1 | A=0) = 0.1, P(B=1 | A=1) = 0.8
    pub(crate) fn two_node() -> CategoricalBN {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        CategoricalBN::from_cardinalities(
            dag,
            &[2, 2],
            vec![vec![0.7, 0.3], vec![0.9, 0.1, 0.2, 0.8]],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_network_has_no_violations() {
        assert!(two_node().validate().is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        let err = CategoricalBN::from_cardinalities(
            dag,
            &[2, 2],
            vec![vec![0.7, 0.3], vec![0.9, 0.1, 0.2, 0.7]],
        )
        .unwrap_err();
        match err {
            ModelError::Invalid(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].kind(), "row-normalization");
                assert!(matches!(v[0], Violation::RowNormalization { node: 1, row: 1, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_and_cardinality_violations() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        let bn = CategoricalBN::new_unchecked(
            dag,
            vec!["a".into(), "b".into()],
            vec![vec!["x".into()], vec!["0".into(), "1".into()]],
            vec![vec![1.0], vec![0.5, 0.5, 0.5]],
        )
        .unwrap();
        let kinds: Vec<_> = bn.validate().iter().map(Violation::kind).collect();
        assert_eq!(kinds, vec!["cardinality", "table-shape"]);
    }

    #[test]
    fn joint_of_two_factors() {
        let bn = two_node();
        assert!((bn.joint_probability(&[1, 1]).unwrap() - 0.24).abs() < 1e-15);
        assert!((bn.joint_log_probability(&[1, 1]).unwrap() - 0.24f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn joint_rejects_bad_assignments() {
        let bn = two_node();
        assert_eq!(
            bn.joint_probability(&[1]),
            Err(ModelError::IncompleteAssignment { expected: 2, actual: 1 })
        );
        assert_eq!(
            bn.joint_probability(&[1, 2]),
            Err(ModelError::StateOutOfRange { node: 1, state: 2 })
        );
    }

    #[test]
    fn uniform_network_joint() {
        let dag = Dag::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let c = 3usize;
        let tables = (0..3)
            .map(|v| vec![1.0 / 3.0; 3usize.pow(dag.parents(v).len() as u32) * c])
            .collect();
        let bn = CategoricalBN::from_cardinalities(dag, &[3, 3, 3], tables).unwrap();
        let p = bn.joint_probability(&[2, 0, 1]).unwrap();
        assert!((p - 3f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn enumeration_edge_cases() {
        let bn = two_node();
        let full: Evidence = [(0, 1), (1, 0)].into_iter().collect();
        let joint = bn.joint_probability(&[1, 0]).unwrap();
        assert!((bn.enumerate_marginal(&full).unwrap() - joint).abs() < 1e-15);
        assert!((bn.enumerate_marginal(&Evidence::new()).unwrap() - 1.0).abs() < 1e-15);
        let total: f64 = (0..2)
            .map(|s| bn.enumerate_marginal(&[(1, s)].into_iter().collect()).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
        // P(B=1) = 0.7*0.1 + 0.3*0.8
        let pb = bn.enumerate_marginal(&[(1, 1)].into_iter().collect()).unwrap();
        assert!((pb - 0.31).abs() < 1e-15);
    }

    #[test]
    fn enumeration_cap_is_an_error() {
        let bn = two_node();
        assert!(matches!(
            bn.enumerate_log_marginal(&Evidence::new(), 1.0),
            Err(ModelError::EnumerationCapacity { .. })
        ));
    }

    #[test]
    fn evidence_is_checked() {
        let bn = two_node();
        let e: Evidence = [(5, 0)].into_iter().collect();
        assert_eq!(bn.enumerate_marginal(&e), Err(ModelError::EvidenceNode(5)));
        let e: Evidence = [(0, 4)].into_iter().collect();
        assert!(matches!(bn.enumerate_marginal(&e), Err(ModelError::EvidenceState { .. })));
    }

    #[test]
    fn deterministic_cpts_force_samples() {
        let dag = Dag::new(3, &[(0, 1), (1, 2)]).unwrap();
        let bn = CategoricalBN::from_cardinalities(
            dag,
            &[2, 3, 2],
            vec![
                vec![0.0, 1.0],
                vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let samples = bn.sample_forward(50, 3);
        assert!(samples.iter().all(|x| x == &vec![1, 2, 1]));
    }

    #[test]
    fn sampling_is_seeded() {
        let bn = two_node();
        assert_eq!(bn.sample_forward(20, 11), bn.sample_forward(20, 11));
        assert_ne!(bn.sample_forward(20, 11), bn.sample_forward(20, 12));
    }

    #[test]
    fn subnetwork_requires_parent_closure() {
        let bn = two_node();
        assert_eq!(
            bn.subnetwork(&NodeSet::from([1])).unwrap_err(),
            ModelError::NotAncestral(1)
        );
        let (sub, map) = bn.subnetwork(&NodeSet::from([0])).unwrap();
        assert_eq!(map, vec![0]);
        assert_eq!(sub.cpt(0).table(), &[0.7, 0.3]);
    }
}
