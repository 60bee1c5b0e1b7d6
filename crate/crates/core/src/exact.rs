//! Junction-tree inference for a single subset (or a whole relevant
//! subgraph).
//!
//! The tree is built from the moralized, min-fill triangulated graph of the
//! nodes in scope. Each CPT that should contribute is multiplied into the
//! smallest clique containing its family; CPTs of the conditioning evidence
//! are left out, which makes the root-belief sum a conditional probability
//! rather than a joint one. Evidence is entered by zeroing inconsistent
//! entries, then a single leaves-to-root sum-product pass runs.

use crate::decomposition::{relevant_nodes, Boundaries};
use crate::error::InferenceError;
use crate::graph::{NodeId, NodeSet};
use crate::model::{CategoricalBN, Evidence};

/// Default limit on the joint state count of a single clique.
pub const DEFAULT_TABLE_CAP: usize = 1 << 20;

/// Dense table over a sorted scope; last scope variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    scope: Vec<NodeId>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Potential {
    fn ones(scope: Vec<NodeId>, cards: Vec<usize>) -> Self {
        let size = cards.iter().product();
        Potential {
            scope,
            cards,
            values: vec![1.0; size],
        }
    }

    pub fn scope(&self) -> &[NodeId] {
        &self.scope
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a full assignment of the whole network.
    pub fn value_at(&self, x: &[usize]) -> f64 {
        let idx = self
            .scope
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + x[v]);
        self.values[idx]
    }

    /// Per-position stride of `self`'s variables inside `other` (0 when absent).
    fn strides_in(&self, other: &[NodeId], other_cards: &[usize]) -> Vec<usize> {
        let mut other_strides = vec![0usize; other.len()];
        let mut s = 1;
        for i in (0..other.len()).rev() {
            other_strides[i] = s;
            s *= other_cards[i];
        }
        self.scope
            .iter()
            .map(|v| match other.binary_search(v) {
                Ok(i) => other_strides[i],
                Err(_) => 0,
            })
            .collect()
    }

    /// Calls `f(self_index, mapped_index)` over every entry of `self`, where
    /// `mapped_index` addresses a table over `other` (a subset of the scope).
    fn for_each_mapped(&self, other: &[NodeId], other_cards: &[usize], mut f: impl FnMut(usize, usize)) {
        let strides = self.strides_in(other, other_cards);
        let mut digits = vec![0usize; self.scope.len()];
        let mut mapped = 0usize;
        let size: usize = self.cards.iter().product();
        for i in 0..size {
            f(i, mapped);
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                mapped += strides[pos];
                if digits[pos] < self.cards[pos] {
                    break;
                }
                mapped -= strides[pos] * digits[pos];
                digits[pos] = 0;
            }
        }
    }

    /// Multiplies in a factor whose scope is contained in this one.
    fn multiply(&mut self, other: &Potential) {
        let mut out = std::mem::take(&mut self.values);
        self.for_each_mapped(&other.scope, &other.cards, |i, j| out[i] *= other.values[j]);
        self.values = out;
    }

    fn multiply_cpt(&mut self, bn: &CategoricalBN, v: NodeId) {
        let mut family: Vec<NodeId> = bn.dag().parents(v).to_vec();
        family.push(v);
        family.sort_unstable();
        let cards: Vec<usize> = family.iter().map(|&u| bn.cardinality(u)).collect();
        // express the CPT as a potential over the sorted family
        let mut factor = Potential::ones(family.clone(), cards);
        let mut x = vec![0usize; bn.len()];
        let mut digits = vec![0usize; family.len()];
        for i in 0..factor.values.len() {
            for (pos, &u) in family.iter().enumerate() {
                x[u] = digits[pos];
            }
            factor.values[i] = bn.prob(v, &x);
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < factor.cards[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
        self.multiply(&factor);
    }

    fn zero_inconsistent(&mut self, e: &Evidence) {
        let observed: Vec<(usize, usize)> = self
            .scope
            .iter()
            .enumerate()
            .filter_map(|(pos, &v)| e.get(v).map(|s| (pos, s)))
            .collect();
        if observed.is_empty() {
            return;
        }
        let mut digits = vec![0usize; self.scope.len()];
        for value in self.values.iter_mut() {
            if observed.iter().any(|&(pos, s)| digits[pos] != s) {
                *value = 0.0;
            }
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < self.cards[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    fn marginalize_to(&self, keep: &[NodeId]) -> Potential {
        let cards: Vec<usize> = keep
            .iter()
            .map(|v| self.cards[self.scope.binary_search(v).expect("keep ⊆ scope")])
            .collect();
        let mut out = Potential::ones(keep.to_vec(), cards);
        out.values.iter_mut().for_each(|x| *x = 0.0);
        let values = &self.values;
        let mut acc = std::mem::take(&mut out.values);
        self.for_each_mapped(keep, &out.cards, |i, j| acc[j] += values[i]);
        out.values = acc;
        out
    }
}

/// Cliques of a triangulated moral graph joined into a spanning tree, with
/// one potential per clique.
#[derive(Debug, Clone)]
pub struct CliqueTree {
    cliques: Vec<Vec<NodeId>>,
    tree_edges: Vec<(usize, usize)>,
    potentials: Vec<Potential>,
    scope: NodeSet,
    /// clique that received each multiplied CPT, by node
    assigned: Vec<(NodeId, usize)>,
    root: usize,
}

impl CliqueTree {
    pub fn cliques(&self) -> &[Vec<NodeId>] {
        &self.cliques
    }

    pub fn tree_edges(&self) -> &[(usize, usize)] {
        &self.tree_edges
    }

    pub fn potentials(&self) -> &[Potential] {
        &self.potentials
    }

    pub fn scope(&self) -> &NodeSet {
        &self.scope
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn set_root(&mut self, root: usize) {
        assert!(root < self.cliques.len(), "root clique out of range");
        self.root = root;
    }

    /// Nodes whose CPT was multiplied into some clique potential.
    pub fn factor_nodes(&self) -> NodeSet {
        self.assigned.iter().map(|&(v, _)| v).collect()
    }

    pub fn sepset(&self, a: usize, b: usize) -> Vec<NodeId> {
        intersect(&self.cliques[a], &self.cliques[b])
    }

    /// Checks that the cliques containing each node form a connected subtree.
    pub fn has_running_intersection(&self) -> bool {
        let adjacency = self.adjacency();
        self.scope.iter().all(|&v| {
            let holding: Vec<usize> = (0..self.cliques.len())
                .filter(|&c| self.cliques[c].binary_search(&v).is_ok())
                .collect();
            let Some(&start) = holding.first() else {
                return true;
            };
            let mut seen = vec![false; self.cliques.len()];
            seen[start] = true;
            let mut stack = vec![start];
            let mut count = 1;
            while let Some(c) = stack.pop() {
                for &d in &adjacency[c] {
                    if !seen[d] && self.cliques[d].binary_search(&v).is_ok() {
                        seen[d] = true;
                        count += 1;
                        stack.push(d);
                    }
                }
            }
            count == holding.len()
        })
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cliques.len()];
        for &(a, b) in &self.tree_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Resets every potential to one and multiplies in the CPTs of
    /// `factor_nodes`, each into the smallest clique holding its family.
    pub fn assign_potentials(
        &mut self,
        bn: &CategoricalBN,
        factor_nodes: &NodeSet,
    ) -> Result<(), InferenceError> {
        for p in self.potentials.iter_mut() {
            p.values.iter_mut().for_each(|x| *x = 1.0);
        }
        self.assigned.clear();
        for &v in factor_nodes {
            let mut family: Vec<NodeId> = bn.dag().parents(v).to_vec();
            family.push(v);
            let home = (0..self.cliques.len())
                .filter(|&c| family.iter().all(|u| self.cliques[c].binary_search(u).is_ok()))
                .min_by_key(|&c| (self.cliques[c].len(), c))
                .ok_or_else(|| {
                    InferenceError::Argument(format!("family of node {v} is not covered by any clique"))
                })?;
            self.potentials[home].multiply_cpt(bn, v);
            self.assigned.push((v, home));
        }
        Ok(())
    }

    /// Zeroes every potential entry that disagrees with the evidence.
    pub fn observe(&mut self, e: &Evidence) -> Result<(), InferenceError> {
        if let Some((v, _)) = e.iter().find(|(v, _)| !self.scope.contains(v)) {
            return Err(InferenceError::Argument(format!(
                "evidence node {v} is outside the clique tree"
            )));
        }
        for p in self.potentials.iter_mut() {
            p.zero_inconsistent(e);
        }
        Ok(())
    }

    /// Leaves-to-root sum-product pass; returns `log Σ β_root`.
    pub fn collect(&self) -> f64 {
        let adjacency = self.adjacency();
        let n = self.cliques.len();
        // iterative DFS from the root to get parents and a post-order
        let mut parent = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(c) = stack.pop() {
            order.push(c);
            for &d in &adjacency[c] {
                if !seen[d] {
                    seen[d] = true;
                    parent[d] = c;
                    stack.push(d);
                }
            }
        }
        let mut beliefs: Vec<Potential> = self.potentials.clone();
        let mut log_scale = 0.0;
        for &c in order.iter().rev() {
            if c == self.root {
                continue;
            }
            let sep = self.sepset(c, parent[c]);
            let mut message = beliefs[c].marginalize_to(&sep);
            let total: f64 = message.values.iter().sum();
            if total <= 0.0 {
                return f64::NEG_INFINITY;
            }
            message.values.iter_mut().for_each(|x| *x /= total);
            log_scale += total.ln();
            beliefs[parent[c]].multiply(&message);
        }
        let total: f64 = beliefs[self.root].values.iter().sum();
        if total <= 0.0 {
            f64::NEG_INFINITY
        } else {
            log_scale + total.ln()
        }
    }
}

fn intersect(a: &[NodeId], b: &[NodeId]) -> Vec<NodeId> {
    a.iter().copied().filter(|v| b.binary_search(v).is_ok()).collect()
}

/// Builds the clique tree over `scope` with the CPTs of every scope node
/// whose family lies inside `scope` multiplied in.
pub fn build_junction_tree(
    bn: &CategoricalBN,
    scope: &NodeSet,
    table_cap: usize,
) -> Result<CliqueTree, InferenceError> {
    let factor_nodes: NodeSet = scope
        .iter()
        .copied()
        .filter(|&v| bn.dag().parents(v).iter().all(|p| scope.contains(p)))
        .collect();
    build_with_factors(bn, scope, &factor_nodes, table_cap)
}

fn build_with_factors(
    bn: &CategoricalBN,
    scope: &NodeSet,
    factor_nodes: &NodeSet,
    table_cap: usize,
) -> Result<CliqueTree, InferenceError> {
    if let Some(v) = scope.iter().find(|&&v| v >= bn.len()) {
        return Err(InferenceError::Argument(format!("unknown node {v} in scope")));
    }
    let (sub, map) = bn.dag().induced(scope);
    let triangulation = sub.moralize().triangulate();
    let chordal = &triangulation.chordal;

    // maximal cliques from the perfect elimination order
    let mut position = vec![0usize; map.len()];
    for (i, &v) in triangulation.elimination_order.iter().enumerate() {
        position[v] = i;
    }
    let mut candidates: Vec<Vec<NodeId>> = triangulation
        .elimination_order
        .iter()
        .map(|&v| {
            let mut c: Vec<NodeId> = chordal
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&w| position[w] > position[v])
                .chain(std::iter::once(v))
                .map(|w| map[w])
                .collect();
            c.sort_unstable();
            c
        })
        .collect();
    candidates.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut cliques: Vec<Vec<NodeId>> = Vec::new();
    for c in candidates {
        if !cliques.iter().any(|k| c.iter().all(|v| k.binary_search(v).is_ok())) {
            cliques.push(c);
        }
    }
    cliques.sort();

    for c in &cliques {
        let states: f64 = c.iter().map(|&v| bn.cardinality(v) as f64).product();
        if states > table_cap as f64 {
            return Err(InferenceError::TableCapacity { states, cap: table_cap });
        }
    }

    // maximum-weight spanning tree on sepset size (Kruskal)
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..cliques.len() {
        for b in a + 1..cliques.len() {
            pairs.push((intersect(&cliques[a], &cliques[b]).len(), a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf: Vec<usize> = (0..cliques.len()).collect();
    fn find(uf: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while uf[r] != r {
            r = uf[r];
        }
        let mut y = x;
        while uf[y] != r {
            let next = uf[y];
            uf[y] = r;
            y = next;
        }
        r
    }
    let mut tree_edges = Vec::new();
    for (_, a, b) in pairs {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra != rb {
            uf[ra] = rb;
            tree_edges.push((a, b));
        }
    }

    let potentials = cliques
        .iter()
        .map(|c| Potential::ones(c.clone(), c.iter().map(|&v| bn.cardinality(v)).collect()))
        .collect();
    let mut tree = CliqueTree {
        cliques,
        tree_edges,
        potentials,
        scope: scope.clone(),
        assigned: Vec::new(),
        root: 0,
    };
    tree.assign_potentials(bn, factor_nodes)?;
    Ok(tree)
}

/// Re-enters the CPTs with those of `ones_nodes` replaced by one, then
/// zeroes entries inconsistent with `values`.
pub fn incorporate_evidence(
    mut jt: CliqueTree,
    bn: &CategoricalBN,
    values: &Evidence,
    ones_nodes: &NodeSet,
) -> Result<CliqueTree, InferenceError> {
    if let Some(v) = ones_nodes.iter().find(|&&v| !values.contains(v)) {
        return Err(InferenceError::Argument(format!(
            "node {v} is set to one but carries no evidence value"
        )));
    }
    let factors: NodeSet = jt.scope.difference(ones_nodes).copied().collect();
    jt.assign_potentials(bn, &factors)?;
    jt.observe(values)?;
    Ok(jt)
}

/// `log P(X_{e_ch} | X_{e_mb \ e_ch})` for one subset.
pub fn subset_log_marginal_exact(
    bn: &CategoricalBN,
    subset: &NodeSet,
    bounds: &Boundaries,
    e: &Evidence,
    table_cap: usize,
) -> Result<f64, InferenceError> {
    let scope: NodeSet = subset.union(&bounds.e_mb).copied().collect();
    let factors: NodeSet = subset.union(&bounds.e_ch).copied().collect();
    let local: Evidence = e.iter().filter(|(v, _)| bounds.e_mb.contains(v)).collect();
    let mut jt = build_with_factors(bn, &scope, &factors, table_cap)?;
    jt.observe(&local)?;
    Ok(jt.collect())
}

pub fn subset_marginal_exact(
    bn: &CategoricalBN,
    subset: &NodeSet,
    bounds: &Boundaries,
    e: &Evidence,
) -> Result<f64, InferenceError> {
    subset_log_marginal_exact(bn, subset, bounds, e, DEFAULT_TABLE_CAP).map(f64::exp)
}

/// `log P(X_e)` from one junction tree over the whole relevant subgraph.
pub fn jt_log_marginal(bn: &CategoricalBN, e: &Evidence, table_cap: usize) -> Result<f64, InferenceError> {
    bn.check_evidence(e)?;
    let scope = relevant_nodes(bn.dag(), &e.nodes());
    if scope.is_empty() {
        return Ok(0.0);
    }
    let mut jt = build_with_factors(bn, &scope, &scope, table_cap)?;
    jt.observe(e)?;
    Ok(jt.collect())
}
