//! Attributed graph representation shared by every stage.
//!
//! A [`Graph`] is a directed edge list over nodes `0..num_nodes`, a dense
//! node-feature matrix with one row per node and one binary label per node
//! (`0` benign, `1` anomaly). Undirected graphs are stored with both edge
//! directions present; [`Graph::symmetrize`] produces that form.

mod io;

pub use io::{load_graph, load_graph_with, write_graph_files, GraphContainer, LoadDiagnostics, LoadOptions};

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Edge = (NodeId, NodeId);

/// Immutable, validated attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    features: DMatrix<f64>,
    labels: Vec<u8>,
    directed: bool,
    allow_self_loops: bool,
}

impl Graph {
    /// Builds a graph, rejecting anything that violates the graph invariants.
    ///
    /// Self-loops are rejected; use [`Graph::with_self_loops`] to admit them.
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        features: DMatrix<f64>,
        labels: Vec<u8>,
        directed: bool,
    ) -> Result<Self> {
        Self::build(num_nodes, edges, features, labels, directed, false)
    }

    pub fn with_self_loops(
        num_nodes: usize,
        edges: Vec<Edge>,
        features: DMatrix<f64>,
        labels: Vec<u8>,
        directed: bool,
    ) -> Result<Self> {
        Self::build(num_nodes, edges, features, labels, directed, true)
    }

    fn build(
        num_nodes: usize,
        edges: Vec<Edge>,
        features: DMatrix<f64>,
        labels: Vec<u8>,
        directed: bool,
        allow_self_loops: bool,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Validation("graph has no nodes".into()));
        }
        if features.nrows() != num_nodes {
            return Err(Error::Validation(format!(
                "feature matrix has {} rows but the graph has {num_nodes} nodes",
                features.nrows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::Validation(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Validation(format!(
                "label of node {bad} is {}, expected 0 or 1",
                labels[bad]
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix contains non-finite values".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(s, t) in &edges {
            if s >= num_nodes || t >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({s},{t}) references a node outside 0..{num_nodes}"
                )));
            }
            if s == t && !allow_self_loops {
                return Err(Error::Validation(format!("self-loop on node {s}")));
            }
            if !seen.insert((s, t)) {
                return Err(Error::Validation(format!("duplicate edge ({s},{t})")));
            }
        }
        Ok(Graph {
            num_nodes,
            edges,
            features,
            labels,
            directed,
            allow_self_loops,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn allows_self_loops(&self) -> bool {
        self.allow_self_loops
    }

    pub fn num_anomalies(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// True when every edge has its reciprocal.
    pub fn is_symmetric(&self) -> bool {
        let set: HashSet<Edge> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(s, t)| set.contains(&(t, s)))
    }

    /// Adds the reciprocal of every edge that lacks one.
    ///
    /// Existing edges keep their order; missing reciprocals are appended in
    /// the order their originals appear. The result is marked undirected.
    pub fn symmetrize(&self) -> Graph {
        let mut set: HashSet<Edge> = self.edges.iter().copied().collect();
        let mut edges = self.edges.clone();
        for &(s, t) in &self.edges {
            if set.insert((t, s)) {
                edges.push((t, s));
            }
        }
        Graph {
            edges,
            directed: false,
            ..self.clone()
        }
    }

    /// Dense 0/1 adjacency matrix, `entry(i, j) = 1` iff edge `(i, j)` exists.
    pub fn to_dense(&self) -> DenseAdjacency {
        let n = self.num_nodes;
        let mut m = DMatrix::zeros(n, n);
        for &(s, t) in &self.edges {
            m[(s, t)] = 1.0;
        }
        DenseAdjacency { matrix: m }
    }

    /// Dense adjacency carrying per-edge weights instead of ones.
    pub fn to_dense_weighted(&self, weights: &[f64]) -> Result<DenseAdjacency> {
        if weights.len() != self.edges.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        let n = self.num_nodes;
        let mut m = DMatrix::zeros(n, n);
        for (&(s, t), &w) in self.edges.iter().zip(weights) {
            m[(s, t)] = w;
        }
        Ok(DenseAdjacency { matrix: m })
    }

    /// Relabels nodes: node `i` becomes `perm[i]`. Edge order is kept.
    pub fn permute(&self, perm: &[NodeId]) -> Result<Graph> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::Shape(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Precondition("not a permutation".into()));
            }
        }
        let mut features = DMatrix::zeros(n, self.feature_dim());
        let mut labels = vec![0; n];
        for i in 0..n {
            features.set_row(perm[i], &self.features.row(i));
            labels[perm[i]] = self.labels[i];
        }
        let edges = self.edges.iter().map(|&(s, t)| (perm[s], perm[t])).collect();
        Ok(Graph {
            num_nodes: n,
            edges,
            features,
            labels,
            directed: self.directed,
            allow_self_loops: self.allow_self_loops,
        })
    }

    /// Same graph with a different label vector.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Graph> {
        Self::build(
            self.num_nodes,
            self.edges.clone(),
            self.features.clone(),
            labels,
            self.directed,
            self.allow_self_loops,
        )
    }

    // Crate-internal constructors for transforms that preserve the invariants
    // by construction (injection appends only fresh, in-range edges).
    pub(crate) fn from_parts_unchecked(
        num_nodes: usize,
        edges: Vec<Edge>,
        features: DMatrix<f64>,
        labels: Vec<u8>,
        directed: bool,
        allow_self_loops: bool,
    ) -> Graph {
        debug_assert_eq!(features.nrows(), num_nodes);
        debug_assert_eq!(labels.len(), num_nodes);
        Graph {
            num_nodes,
            edges,
            features,
            labels,
            directed,
            allow_self_loops,
        }
    }

    pub(crate) fn into_parts(self) -> (usize, Vec<Edge>, DMatrix<f64>, Vec<u8>, bool, bool) {
        (
            self.num_nodes,
            self.edges,
            self.features,
            self.labels,
            self.directed,
            self.allow_self_loops,
        )
    }
}

/// Square dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAdjacency {
    matrix: DMatrix<f64>,
}

impl DenseAdjacency {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DenseAdjacency { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }
}
