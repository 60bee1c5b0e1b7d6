//! Splitting a marginal-likelihood query into independent pieces.
//!
//! Nodes that are neither evidence nor ancestors of evidence do not affect
//! `P(X_e)` and are pruned. The remaining non-evidence nodes fall into
//! conditionally independent subsets: two free nodes share a subset exactly
//! when they are d-connected given the evidence. On the pruned graph that is
//! the same as being connected in the moral graph once evidence nodes are
//! deleted, which is how [`find_subsets`] computes them.

use crate::error::InferenceError;
use crate::graph::{Dag, NodeId, NodeSet};
use crate::model::{CategoricalBN, Evidence};

/// Evidence touching one subset: the evidence in the subset's Markov
/// blankets, and the evidence children and parents of its nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Boundaries {
    pub e_mb: NodeSet,
    pub e_ch: NodeSet,
    pub e_pa: NodeSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetDecomposition {
    /// Evidence nodes and their ancestors.
    pub relevant_nodes: NodeSet,
    /// Ordered by smallest member.
    pub subsets: Vec<NodeSet>,
    pub boundaries: Vec<Boundaries>,
    /// Evidence not a child of any subset node; all of its parents are evidence.
    pub leftover_evidence: NodeSet,
}

impl SubsetDecomposition {
    /// Number of free (non-evidence) relevant nodes.
    pub fn free_count(&self) -> usize {
        self.subsets.iter().map(NodeSet::len).sum()
    }
}

/// Nodes `i` with `({i} ∪ de(i)) ∩ e = ∅`.
pub fn irrelevant_nodes(dag: &Dag, e: &NodeSet) -> NodeSet {
    let relevant = relevant_nodes(dag, e);
    dag.nodes().filter(|v| !relevant.contains(v)).collect()
}

/// `e ∪ ancestors(e)`.
pub fn relevant_nodes(dag: &Dag, e: &NodeSet) -> NodeSet {
    let mut keep = dag.ancestors_of(e);
    keep.extend(e.iter().copied());
    keep
}

/// The network restricted to `e ∪ ancestors(e)`. CPTs carry over unchanged
/// because the node set is closed under parents. Returns the subnetwork and
/// its new → original id map.
pub fn relevant_subgraph(
    bn: &CategoricalBN,
    e: &NodeSet,
) -> Result<(CategoricalBN, Vec<NodeId>), InferenceError> {
    Ok(bn.subnetwork(&relevant_nodes(bn.dag(), e))?)
}

/// Conditionally independent subsets of the non-evidence nodes. `dag` must
/// already be pruned to the relevant subgraph of `e`.
pub fn find_subsets(dag: &Dag, e: &NodeSet) -> Vec<NodeSet> {
    let free: NodeSet = dag.nodes().filter(|v| !e.contains(v)).collect();
    dag.moralize().components(&free)
}

pub fn subset_boundaries(
    dag: &Dag,
    subset: &NodeSet,
    e: &NodeSet,
) -> Result<Boundaries, InferenceError> {
    if let Some(v) = subset.intersection(e).next() {
        return Err(InferenceError::Argument(format!(
            "subset contains evidence node {v}"
        )));
    }
    let mut b = Boundaries::default();
    for &u in subset {
        b.e_mb.extend(dag.markov_blanket(u)?.intersection(e));
        b.e_ch.extend(dag.children(u).iter().filter(|c| e.contains(c)));
        b.e_pa.extend(dag.parents(u).iter().filter(|p| e.contains(p)));
    }
    Ok(b)
}

/// Prunes to the relevant subgraph, splits it into subsets and computes each
/// subset's boundary evidence. All ids in the result refer to `bn`.
pub fn decompose(bn: &CategoricalBN, e: &Evidence) -> Result<SubsetDecomposition, InferenceError> {
    bn.check_evidence(e)?;
    let e_nodes = e.nodes();
    let relevant = relevant_nodes(bn.dag(), &e_nodes);
    let (dag, map) = bn.dag().induced(&relevant);
    let local_e: NodeSet = map
        .iter()
        .enumerate()
        .filter(|(_, old)| e_nodes.contains(old))
        .map(|(new, _)| new)
        .collect();
    let to_global = |s: &NodeSet| -> NodeSet { s.iter().map(|&v| map[v]).collect() };

    let mut subsets = Vec::new();
    let mut boundaries = Vec::new();
    for local in find_subsets(&dag, &local_e) {
        let b = subset_boundaries(&dag, &local, &local_e)?;
        subsets.push(to_global(&local));
        boundaries.push(Boundaries {
            e_mb: to_global(&b.e_mb),
            e_ch: to_global(&b.e_ch),
            e_pa: to_global(&b.e_pa),
        });
    }
    let mut leftover = e_nodes;
    for b in &boundaries {
        for v in &b.e_ch {
            leftover.remove(v);
        }
    }
    Ok(SubsetDecomposition {
        relevant_nodes: relevant,
        subsets,
        boundaries,
        leftover_evidence: leftover,
    })
}
