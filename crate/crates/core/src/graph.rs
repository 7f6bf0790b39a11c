//! Undirected communication graphs and their algebraic views.
//!
//! Nodes are `0..N`. Edges are stored normalised as `(i, j)` with `i < j` and
//! sorted lexicographically; that order is the row order of the incidence
//! matrix and of every edge-stacked vector in the crate.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an explicit edge list.
    ///
    /// Rejects self-loops, duplicates (in either orientation) and out-of-range
    /// indices. Connectivity is not required here; see [`Graph::ensure_connected`].
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidTopology("graph needs at least one node".into()));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at node {a}")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        for pair in normalized.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidTopology(format!(
                    "duplicate edge ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j) in &normalized {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: normalized,
            neighbors,
        })
    }

    /// Complete graph K_N.
    pub fn complete(node_count: usize) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidTopology(format!(
                "complete graph needs N >= 2, got {node_count}"
            )));
        }
        let edges: Vec<_> = (0..node_count)
            .flat_map(|i| ((i + 1)..node_count).map(move |j| (i, j)))
            .collect();
        Self::from_edges(node_count, &edges)
    }

    /// Cycle C_N with edges `(i, (i + 1) mod N)`.
    pub fn ring(node_count: usize) -> Result<Self> {
        if node_count < 3 {
            return Err(Error::InvalidTopology(format!(
                "ring needs N >= 3, got {node_count}"
            )));
        }
        let edges: Vec<_> = (0..node_count).map(|i| (i, (i + 1) % node_count)).collect();
        Self::from_edges(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in incidence-row order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors
            .get(a)
            .is_some_and(|list| list.binary_search(&b).is_ok())
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.node_count];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(node) = queue.pop_front() {
                for &next in &self.neighbors[node] {
                    if !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    pub fn ensure_connected(&self) -> Result<()> {
        match self.component_count() {
            1 => Ok(()),
            components => Err(Error::Disconnected { components }),
        }
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.node_count, self.node_count);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn laplacian(&self) -> LaplacianView {
        let adjacency = self.adjacency();
        let degree = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.node_count,
            (0..self.node_count).map(|i| self.degree(i) as f64),
        ));
        let laplacian = &degree - &adjacency;
        LaplacianView {
            laplacian,
            degree,
            adjacency,
        }
    }

    /// Signed incidence matrix: +1 on the lower endpoint, -1 on the higher.
    pub fn incidence(&self) -> IncidenceView {
        let mut h = DMatrix::zeros(self.edges.len(), self.node_count);
        for (row, &(i, j)) in self.edges.iter().enumerate() {
            h[(row, i)] = 1.0;
            h[(row, j)] = -1.0;
        }
        IncidenceView { incidence: h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianView {
    pub laplacian: DMatrix<f64>,
    pub degree: DMatrix<f64>,
    pub adjacency: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceView {
    pub incidence: DMatrix<f64>,
}

/// `m ⊗ I_n`.
pub fn kron_expand(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    assert!(n >= 1, "spatial dimension must be positive");
    m.kronecker(&DMatrix::identity(n, n))
}
