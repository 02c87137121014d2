//! DAG skeletons: node/edge bookkeeping, topological order, reachability and
//! causal depth.
//!
//! Nodes are labelled `1..=N`; node `N` is the designated reward node by
//! convention throughout the crate. Internally everything is stored in
//! 0-based vectors; the subtraction happens only inside the accessors here.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// A directed acyclic graph over nodes `1..=node_count`.
///
/// Parent sets, topological order, maximum in-degree and per-node causal
/// depth (length of the longest directed path ending at the node) are
/// computed once at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagSkeleton {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    depth: Vec<usize>,
    max_in_degree: usize,
}

impl DagSkeleton {
    /// Builds a skeleton from `(i, j)` pairs meaning `i -> j`.
    ///
    /// Fails with [`Error::CycleDetected`] when no topological order exists,
    /// and with [`Error::InvalidInstance`] on out-of-range node labels or
    /// self-loops.
    pub fn new(node_count: usize, edge_list: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidInstance("node_count must be positive".into()));
        }
        let mut edges = BTreeSet::new();
        let mut parents = vec![Vec::new(); node_count];
        let mut children = vec![Vec::new(); node_count];
        for (i, j) in edge_list {
            if i == 0 || j == 0 || i > node_count || j > node_count {
                return Err(Error::InvalidInstance(format!(
                    "edge ({i}, {j}) out of range for {node_count} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidInstance(format!("self-loop on node {i}")));
            }
            if edges.insert((i, j)) {
                parents[j - 1].push(i);
                children[i - 1].push(j);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        let order = topological_order(node_count, &parents)?;
        let mut depth = vec![0usize; node_count];
        for &v in &order {
            depth[v - 1] = parents[v - 1]
                .iter()
                .map(|&p| depth[p - 1] + 1)
                .max()
                .unwrap_or(0);
        }
        let max_in_degree = parents.iter().map(Vec::len).max().unwrap_or(0);

        Ok(DagSkeleton {
            node_count,
            edges,
            parents,
            children,
            order,
            depth,
            max_in_degree,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// The designated reward node (always the highest label).
    pub fn reward_node(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Sorted parent labels of `i`.
    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i - 1]
    }

    /// Sorted child labels of `i`.
    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i - 1]
    }

    /// A topological order with ascending-label tie-break: for every edge
    /// `(i -> j)` the order places `i` before `j`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Causal depth of node `i`: length of the longest directed path ending
    /// at `i`. Roots have depth 0.
    pub fn depth_of(&self, i: usize) -> usize {
        self.depth[i - 1]
    }

    /// Maximum causal depth of the graph.
    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Maximum in-degree over all nodes.
    pub fn max_in_degree(&self) -> usize {
        self.max_in_degree
    }

    pub fn is_root(&self, i: usize) -> bool {
        self.parents[i - 1].is_empty()
    }

    /// Strict ancestors of `i` (excluding `i`), ascending.
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        self.reach(i, |v| &self.parents[v - 1])
    }

    /// Strict descendants of `i` (excluding `i`), ascending.
    pub fn descendants(&self, i: usize) -> Vec<usize> {
        self.reach(i, |v| &self.children[v - 1])
    }

    fn reach<'a>(&'a self, start: usize, next: impl Fn(usize) -> &'a [usize]) -> Vec<usize> {
        let mut seen = vec![false; self.node_count];
        let mut stack: Vec<usize> = next(start).to_vec();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v - 1], true) {
                continue;
            }
            stack.extend_from_slice(next(v));
        }
        (1..=self.node_count).filter(|&v| seen[v - 1]).collect()
    }
}

/// Kahn's algorithm with ascending-label tie-break over an explicit parent
/// relation. Returns [`Error::CycleDetected`] listing the unplaced nodes.
pub fn topological_order(node_count: usize, parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); node_count];
    for (child0, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p - 1].push(child0 + 1);
        }
    }
    // BTreeSet keeps the frontier sorted so ties break by ascending label.
    let mut ready: BTreeSet<usize> = (1..=node_count).filter(|&v| indegree[v - 1] == 0).collect();
    let mut order = Vec::with_capacity(node_count);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in &children[v - 1] {
            indegree[c - 1] -= 1;
            if indegree[c - 1] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < node_count {
        let nodes = (1..=node_count).filter(|&v| !order.contains(&v)).collect();
        return Err(Error::CycleDetected { nodes });
    }
    Ok(order)
}

/// Checks that `order` is a permutation of `1..=n` placing every edge source
/// before its target.
pub fn order_is_valid(skeleton: &DagSkeleton, order: &[usize]) -> bool {
    let n = skeleton.node_count();
    if order.len() != n {
        return false;
    }
    let mut position = vec![usize::MAX; n];
    for (pos, &v) in order.iter().enumerate() {
        if v == 0 || v > n || position[v - 1] != usize::MAX {
            return false;
        }
        position[v - 1] = pos;
    }
    skeleton
        .edges()
        .all(|(i, j)| position[i - 1] < position[j - 1])
}
