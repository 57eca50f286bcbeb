//! Undirected agent networks with a fixed edge orientation.
//!
//! Node ids are zero-based here; configuration files use one-based ids and
//! convert on load. Each edge `(head, tail)` is oriented in the order it was
//! listed, and that orientation fixes the sign convention of the incidence
//! matrix and of the per-edge sign selections.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Network {
    /// Validates ids, self-loops and duplicate undirected edges. Connectivity
    /// is not required here; see [`Network::require_connected`].
    pub fn new(m: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Network("network needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        for &(head, tail) in &edges {
            if head >= m || tail >= m {
                return Err(Error::Network(format!(
                    "edge ({}, {}) references a node outside 1..={m}",
                    head + 1,
                    tail + 1
                )));
            }
            if head == tail {
                return Err(Error::Network(format!("self-loop at node {}", head + 1)));
            }
            if !seen.insert((head.min(tail), head.max(tail))) {
                return Err(Error::Network(format!(
                    "duplicate edge between {} and {}",
                    head + 1,
                    tail + 1
                )));
            }
        }
        Ok(Self { m, edges })
    }

    /// Builds from one-based `(head, tail)` pairs.
    pub fn from_one_based(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for &(h, t) in edges {
            if h == 0 || t == 0 {
                return Err(Error::Network("node ids start at 1".into()));
            }
            zero_based.push((h - 1, t - 1));
        }
        Self::new(m, zero_based)
    }

    /// `1 − 2 − … − m`.
    pub fn path(m: usize) -> Self {
        let edges = (1..m).map(|i| (i - 1, i)).collect();
        Self::new(m.max(1), edges).expect("path edges are valid")
    }

    /// Path closed by the edge `(m, 1)`; needs `m >= 3`.
    pub fn ring(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::Network("a ring needs at least 3 nodes".into()));
        }
        let mut edges: Vec<_> = (1..m).map(|i| (i - 1, i)).collect();
        edges.push((m - 1, 0));
        Self::new(m, edges)
    }

    /// Node 1 joined to every other node.
    pub fn star(m: usize) -> Self {
        let edges = (1..m).map(|i| (0, i)).collect();
        Self::new(m.max(1), edges).expect("star edges are valid")
    }

    pub fn complete(m: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
            }
        }
        Self::new(m.max(1), edges).expect("complete edges are valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `m × m̄` matrix: `+1` at (head, k), `−1` at (tail, k).
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m, self.edges.len());
        for (k, &(head, tail)) in self.edges.iter().enumerate() {
            h[(head, k)] = 1.0;
            h[(tail, k)] = -1.0;
        }
        h
    }

    /// `H ⊗ I_n`.
    pub fn expanded_incidence(&self, n: usize) -> DMatrix<f64> {
        self.incidence_matrix()
            .kronecker(&DMatrix::<f64>::identity(n, n))
    }

    /// Breadth-first search from node 1.
    pub fn is_connected(&self) -> bool {
        let neighbors = self.neighbor_sets();
        let mut visited = vec![false; self.m];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if !visited[v] {
                    visited[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.m
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::Network(
                "network must be connected for the flows to reach consensus".into(),
            ))
        }
    }

    /// Sorted neighbor lists; `j ∈ N_i ⇔ i ∈ N_j`.
    pub fn neighbor_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![BTreeSet::new(); self.m];
        for &(head, tail) in &self.edges {
            sets[head].insert(tail);
            sets[tail].insert(head);
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbor_sets().iter().map(Vec::len).max().unwrap_or(0)
    }
}
