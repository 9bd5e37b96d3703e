//! Turning node scores into edge weights and one-hot edge attributes.
//!
//! Weights: the edge `(u, v)` gets `1 + score[u]`. Attributes: scores are
//! binned into a `k`-bin equal-width histogram over `[min, max]` and every
//! edge carries the one-hot vector of its source node's bin. Bins are
//! half-open `[e_i, e_{i+1})` except the last, which is closed, so the
//! maximum lands in bin `k - 1`. A constant score vector maps to bin 0.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphContainer};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    base: Graph,
    edge_weights: Option<Vec<f64>>,
    attrs: Option<EdgeAttrs>,
}

#[derive(Debug, Clone, PartialEq)]
struct EdgeAttrs {
    bins: Vec<usize>,
    bin_edges: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AugmentMode {
    None,
    Weight,
    Attr { bins: usize },
    Both { bins: usize },
}

impl AugmentMode {
    pub fn bins(&self) -> Option<usize> {
        match *self {
            AugmentMode::Attr { bins } | AugmentMode::Both { bins } => Some(bins),
            _ => None,
        }
    }

    pub fn uses_weights(&self) -> bool {
        matches!(self, AugmentMode::Weight | AugmentMode::Both { .. })
    }
}

impl AugmentedGraph {
    /// Graph with neither weights nor attributes.
    pub fn plain(g: Graph) -> Self {
        AugmentedGraph {
            base: g,
            edge_weights: None,
            attrs: None,
        }
    }

    pub fn base(&self) -> &Graph {
        &self.base
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    /// Bin index per edge, aligned with the base graph's edge order.
    pub fn edge_bins(&self) -> Option<&[usize]> {
        self.attrs.as_ref().map(|a| a.bins.as_slice())
    }

    pub fn bin_edges(&self) -> Option<&[f64]> {
        self.attrs.as_ref().map(|a| a.bin_edges.as_slice())
    }

    pub fn num_bins(&self) -> Option<usize> {
        self.attrs.as_ref().map(|a| a.bin_edges.len() - 1)
    }

    /// Materialized one-hot attribute vectors, one per edge.
    pub fn edge_attrs(&self) -> Option<Vec<Vec<f64>>> {
        let a = self.attrs.as_ref()?;
        let k = a.bin_edges.len() - 1;
        Some(
            a.bins
                .iter()
                .map(|&b| {
                    let mut v = vec![0.0; k];
                    v[b] = 1.0;
                    v
                })
                .collect(),
        )
    }

    /// Same graph with the weights of `other` (which must share the base).
    pub fn merge(mut self, other: AugmentedGraph) -> Result<Self> {
        if self.base != other.base {
            return Err(Error::Precondition("cannot merge augmentations of different graphs".into()));
        }
        self.edge_weights = self.edge_weights.or(other.edge_weights);
        self.attrs = self.attrs.or(other.attrs);
        Ok(self)
    }
}

fn check_inputs(g: &Graph, scores: &[f64]) -> Result<()> {
    if !g.is_symmetric() {
        return Err(Error::Precondition(
            "graph has edges without a reciprocal; symmetrize it before augmenting".into(),
        ));
    }
    if scores.len() != g.num_nodes() {
        return Err(Error::Precondition(format!(
            "{} scores for {} nodes",
            scores.len(),
            g.num_nodes()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Precondition("scores must be finite".into()));
    }
    Ok(())
}

/// Edge `(u, v)` gets weight `1 + scores[u]`.
pub fn weight_edges(g: &Graph, scores: &[f64]) -> Result<AugmentedGraph> {
    check_inputs(g, scores)?;
    let w = g.edges().iter().map(|&(s, _)| 1.0 + scores[s]).collect();
    Ok(AugmentedGraph {
        base: g.clone(),
        edge_weights: Some(w),
        attrs: None,
    })
}

/// `k + 1` equal-width bin edges spanning `[min, max]` of `scores`.
pub fn build_histogram(scores: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if scores.is_empty() {
        return Err(Error::Precondition("cannot build a histogram of no scores".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Precondition("scores must be finite".into()));
    }
    let width = (hi - lo) / k as f64;
    let mut edges: Vec<f64> = (0..=k).map(|i| lo + width * i as f64).collect();
    edges[k] = hi;
    Ok(edges)
}

/// Bin containing `value`. Values outside the range clamp to the end bins.
pub fn bin_index(value: f64, bin_edges: &[f64]) -> usize {
    let k = bin_edges.len() - 1;
    let (lo, hi) = (bin_edges[0], bin_edges[k]);
    if hi <= lo {
        return 0;
    }
    let guess = ((value - lo) / (hi - lo) * k as f64).floor();
    let mut idx = if guess.is_nan() || guess < 0.0 {
        0
    } else {
        (guess as usize).min(k - 1)
    };
    // Snap to the stored edges so rounding in the guess cannot disagree
    // with the half-open intervals.
    while idx > 0 && value < bin_edges[idx] {
        idx -= 1;
    }
    while idx + 1 < k && value >= bin_edges[idx + 1] {
        idx += 1;
    }
    idx
}

/// One-hot edge attributes from the histogram bin of each source node.
pub fn encode_edge_attrs(g: &Graph, scores: &[f64], k: usize) -> Result<AugmentedGraph> {
    check_inputs(g, scores)?;
    let bin_edges = build_histogram(scores, k)?;
    let node_bin: Vec<usize> = scores.iter().map(|&s| bin_index(s, &bin_edges)).collect();
    let bins = g.edges().iter().map(|&(s, _)| node_bin[s]).collect();
    Ok(AugmentedGraph {
        base: g.clone(),
        edge_weights: None,
        attrs: Some(EdgeAttrs { bins, bin_edges }),
    })
}

/// Applies `mode` to an already symmetrized graph.
pub fn augment(g: &Graph, scores: &[f64], mode: AugmentMode) -> Result<AugmentedGraph> {
    match mode {
        AugmentMode::None => {
            check_inputs(g, scores)?;
            Ok(AugmentedGraph::plain(g.clone()))
        }
        AugmentMode::Weight => weight_edges(g, scores),
        AugmentMode::Attr { bins } => encode_edge_attrs(g, scores, bins),
        AugmentMode::Both { bins } => weight_edges(g, scores)?.merge(encode_edge_attrs(g, scores, bins)?),
    }
}

/// JSON container: the base graph plus whatever augmentation is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedContainer {
    pub graph: GraphContainer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weights: Option<Vec<f64>>,
    /// Index of the hot entry of each edge's one-hot attribute vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_attr_bins: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
}

impl AugmentedContainer {
    pub fn from_augmented(a: &AugmentedGraph, scores: Option<&[f64]>) -> Self {
        AugmentedContainer {
            graph: GraphContainer::from_graph(&a.base),
            scores: scores.map(<[f64]>::to_vec),
            edge_weights: a.edge_weights.clone(),
            edge_attr_bins: a.attrs.as_ref().map(|x| x.bins.clone()),
            bin_edges: a.attrs.as_ref().map(|x| x.bin_edges.clone()),
        }
    }

    pub fn into_augmented(self) -> Result<AugmentedGraph> {
        let base = self.graph.into_graph()?;
        let m = base.num_edges();
        if let Some(w) = &self.edge_weights {
            if w.len() != m || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("expected {m} finite edge weights")));
            }
        }
        let attrs = match (self.edge_attr_bins, self.bin_edges) {
            (None, None) => None,
            (Some(bins), Some(bin_edges)) => {
                if bin_edges.len() < 2 || bins.len() != m || bins.iter().any(|&b| b + 1 >= bin_edges.len()) {
                    return Err(Error::Validation("edge attribute bins do not match the bin edges".into()));
                }
                Some(EdgeAttrs { bins, bin_edges })
            }
            _ => return Err(Error::Validation("edge_attr_bins and bin_edges must appear together".into())),
        };
        Ok(AugmentedGraph {
            base,
            edge_weights: self.edge_weights,
            attrs,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }
}
