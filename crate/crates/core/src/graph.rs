//! Directed acyclic graphs and the structural queries used throughout the
//! crate: family relations, Markov blankets, moralization, triangulation and
//! d-separation.
//!
//! Nodes are dense indices `0..n`. Every set-valued result is a [`NodeSet`]
//! (a `BTreeSet`), so iteration order is always ascending node id.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

pub type NodeId = usize;
pub type NodeSet = BTreeSet<NodeId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("directed cycle through nodes {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("node sets must be pairwise disjoint")]
    OverlappingSets,
}

/// A directed acyclic graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
}

/// Parents, children, ancestors and descendants of a single node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Relations {
    pub parents: NodeSet,
    pub children: NodeSet,
    pub ancestors: NodeSet,
    pub descendants: NodeSet,
}

impl Dag {
    /// Builds a DAG, rejecting out-of-range ids, self-loops, duplicate edges
    /// and directed cycles.
    pub fn new(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(from, to) in edges {
            if from >= n {
                return Err(GraphError::UnknownNode(from));
            }
            if to >= n {
                return Err(GraphError::UnknownNode(to));
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if children[from].contains(&to) {
                return Err(GraphError::DuplicateEdge(from, to));
            }
            children[from].push(to);
            parents[to].push(from);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let dag = Dag { parents, children };
        if let Some(cycle) = dag.find_cycle() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(dag)
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.len()
    }

    /// Sorted parent list of `v`.
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    /// Sorted child list of `v`.
    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// All edges `(parent, child)`, ordered by child then parent.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes()
            .flat_map(|v| self.parents[v].iter().map(move |&p| (p, v)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    fn check(&self, v: NodeId) -> Result<(), GraphError> {
        if v < self.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v))
        }
    }

    fn check_set(&self, set: &NodeSet) -> Result<(), GraphError> {
        set.iter().try_for_each(|&v| self.check(v))
    }

    pub fn relations(&self, v: NodeId) -> Result<Relations, GraphError> {
        self.check(v)?;
        Ok(Relations {
            parents: self.parents[v].iter().copied().collect(),
            children: self.children[v].iter().copied().collect(),
            ancestors: self.reach(std::iter::once(v), |u| &self.parents[u]),
            descendants: self.reach(std::iter::once(v), |u| &self.children[u]),
        })
    }

    /// Strict ancestors of every node in `set` (nodes of `set` itself are
    /// included only if they are an ancestor of another member).
    pub fn ancestors_of(&self, set: &NodeSet) -> NodeSet {
        self.reach(set.iter().copied(), |u| &self.parents[u])
    }

    pub fn descendants_of(&self, set: &NodeSet) -> NodeSet {
        self.reach(set.iter().copied(), |u| &self.children[u])
    }

    fn reach<'a, F>(&'a self, start: impl Iterator<Item = NodeId>, next: F) -> NodeSet
    where
        F: Fn(NodeId) -> &'a [NodeId],
    {
        let mut seen = NodeSet::new();
        let mut stack: Vec<NodeId> = start.collect();
        while let Some(u) = stack.pop() {
            for &w in next(u) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Parents, children and co-parents of `v`, excluding `v`.
    pub fn markov_blanket(&self, v: NodeId) -> Result<NodeSet, GraphError> {
        self.check(v)?;
        let mut mb: NodeSet = self.parents[v].iter().copied().collect();
        for &c in &self.children[v] {
            mb.insert(c);
            mb.extend(self.parents[c].iter().copied());
        }
        mb.remove(&v);
        Ok(mb)
    }

    /// Kahn's algorithm, always releasing the smallest available node id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        match self.kahn() {
            Ok(order) => Ok(order),
            Err(()) => Err(GraphError::Cycle(self.find_cycle().unwrap_or_default())),
        }
    }

    fn kahn(&self) -> Result<Vec<NodeId>, ()> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<NodeId> = self.nodes().filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == self.len() {
            Ok(order)
        } else {
            Err(())
        }
    }

    fn find_cycle(&self) -> Option<Vec<NodeId>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.len()];
        let mut path = Vec::new();
        for root in self.nodes() {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            path.push(root);
            while let Some(&mut (v, ref mut idx)) = stack.last_mut() {
                if let Some(&c) = self.children[v].get(*idx) {
                    *idx += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            path.push(c);
                            stack.push((c, 0));
                        }
                        1 => {
                            let start = path.iter().position(|&p| p == c).unwrap();
                            return Some(path[start..].to_vec());
                        }
                        _ => {}
                    }
                } else {
                    state[v] = 2;
                    path.pop();
                    stack.pop();
                }
            }
        }
        None
    }

    /// Subgraph induced by `keep`, reindexed densely in ascending id order.
    /// Returns the new graph and the map from new id to original id.
    pub fn induced(&self, keep: &NodeSet) -> (Dag, Vec<NodeId>) {
        let map: Vec<NodeId> = keep.iter().copied().collect();
        let mut inverse = vec![usize::MAX; self.len()];
        for (new, &old) in map.iter().enumerate() {
            inverse[old] = new;
        }
        let mut parents = vec![Vec::new(); map.len()];
        let mut children = vec![Vec::new(); map.len()];
        for (new, &old) in map.iter().enumerate() {
            for &p in &self.parents[old] {
                if inverse[p] != usize::MAX {
                    parents[new].push(inverse[p]);
                    children[inverse[p]].push(new);
                }
            }
        }
        for list in children.iter_mut() {
            list.sort_unstable();
        }
        (Dag { parents, children }, map)
    }

    /// Undirected skeleton plus an edge between every pair of co-parents.
    pub fn moralize(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::new(self.len());
        for v in self.nodes() {
            let pa = &self.parents[v];
            for (i, &p) in pa.iter().enumerate() {
                g.add_edge(p, v);
                for &q in &pa[i + 1..] {
                    g.add_edge(p, q);
                }
            }
        }
        g
    }

    /// Reachability-based d-separation test: `true` iff every trail between
    /// `a` and `b` is blocked by `z`.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool, GraphError> {
        self.check_set(a)?;
        self.check_set(b)?;
        self.check_set(z)?;
        if !a.is_disjoint(b) || !a.is_disjoint(z) || !b.is_disjoint(z) {
            return Err(GraphError::OverlappingSets);
        }
        // nodes whose descendant set meets z: z itself and its ancestors
        let mut z_or_anc = self.ancestors_of(z);
        z_or_anc.extend(z.iter().copied());

        // (node, arrived_from_child): true = travelling up against an edge
        let mut visited = vec![[false; 2]; self.len()];
        let mut queue: VecDeque<(NodeId, bool)> = a.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            let slot = usize::from(up);
            if visited[v][slot] {
                continue;
            }
            visited[v][slot] = true;
            let observed = z.contains(&v);
            if !observed && b.contains(&v) {
                return Ok(false);
            }
            if up {
                if !observed {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !observed {
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if z_or_anc.contains(&v) {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        Ok(true)
    }
}

/// Simple undirected graph with sorted adjacency sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<NodeSet>,
}

/// A chordal supergraph together with the elimination order that produced it.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub chordal: UndirectedGraph,
    pub elimination_order: Vec<NodeId>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        UndirectedGraph {
            adj: vec![NodeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut g = Self::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u].contains(&v)
    }

    pub fn neighbors(&self, v: NodeId) -> &NodeSet {
        &self.adj[v]
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, nb)| nb.range(u + 1..).map(move |&v| (u, v)))
            .collect()
    }

    /// Drops every node outside `keep` (ids are preserved; removed nodes
    /// become isolated).
    pub fn restrict(&self, keep: &NodeSet) -> UndirectedGraph {
        let adj = self
            .adj
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                if keep.contains(&v) {
                    nb.intersection(keep).copied().collect()
                } else {
                    NodeSet::new()
                }
            })
            .collect();
        UndirectedGraph { adj }
    }

    /// Connected components among the nodes of `within`, each sorted, listed
    /// by smallest member.
    pub fn components(&self, within: &NodeSet) -> Vec<NodeSet> {
        let mut seen = NodeSet::new();
        let mut out = Vec::new();
        for &start in within {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = NodeSet::from([start]);
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &w in &self.adj[u] {
                    if within.contains(&w) && seen.insert(w) {
                        comp.insert(w);
                        stack.push(w);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Greedy min-fill elimination (ties: fewer neighbours, then smaller id).
    pub fn triangulate(&self) -> Triangulation {
        let n = self.len();
        let mut chordal = self.clone();
        let mut work = self.adj.clone();
        let mut alive: NodeSet = (0..n).collect();
        let mut order = Vec::with_capacity(n);
        while !alive.is_empty() {
            let v = *alive
                .iter()
                .min_by_key(|&&v| (fill_in(&work[v], &work), work[v].len(), v))
                .expect("nonempty");
            let nb: Vec<NodeId> = work[v].iter().copied().collect();
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if work[a].insert(b) {
                        work[b].insert(a);
                        chordal.add_edge(a, b);
                    }
                }
            }
            for &a in &nb {
                work[a].remove(&v);
            }
            work[v].clear();
            alive.remove(&v);
            order.push(v);
        }
        Triangulation {
            chordal,
            elimination_order: order,
        }
    }

    /// Maximum-cardinality-search chordality test.
    pub fn is_chordal(&self) -> bool {
        let n = self.len();
        let mut weight = vec![0usize; n];
        let mut numbered = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let v = (0..n)
                .filter(|&v| !numbered[v])
                .max_by_key(|&v| (weight[v], std::cmp::Reverse(v)))
                .expect("unnumbered node");
            numbered[v] = true;
            order.push(v);
            for &w in &self.adj[v] {
                if !numbered[w] {
                    weight[w] += 1;
                }
            }
        }
        // reverse of the MCS order is a perfect elimination ordering iff chordal
        let mut position = vec![0usize; n];
        for (i, &v) in order.iter().enumerate() {
            position[v] = i;
        }
        for &v in &order {
            let earlier: Vec<NodeId> = self.adj[v]
                .iter()
                .copied()
                .filter(|&w| position[w] < position[v])
                .collect();
            if let Some(&parent) = earlier.iter().max_by_key(|&&w| position[w]) {
                for &w in &earlier {
                    if w != parent && !self.has_edge(parent, w) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn fill_in(nb: &NodeSet, adj: &[NodeSet]) -> usize {
    let nb: Vec<NodeId> = nb.iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in nb.iter().enumerate() {
        for &b in &nb[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}
