use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Sparse, Tape, Var};
use crate::augment::AugmentedGraph;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvType {
    /// `D^-1/2 (W + I) D^-1/2 H Theta + b` with weighted degrees.
    WeightedGcn,
    /// `H W_s + (weighted mean of neighbours) W_n + b`.
    SageMean,
    /// Two-layer MLP over `(1 + eps) h_i + sum_j w_ji h_j`.
    GinSum,
    /// Messages `relu(h_j W_n + enc(e_ji))`, mean-aggregated, then
    /// `relu(h_i W_s + m_i + b)`.
    EdgeAttrConv,
}

impl ConvType {
    pub const ALL: [ConvType; 4] = [
        ConvType::WeightedGcn,
        ConvType::SageMean,
        ConvType::GinSum,
        ConvType::EdgeAttrConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvType::WeightedGcn => "weighted_gcn",
            ConvType::SageMean => "sage_mean",
            ConvType::GinSum => "gin_sum",
            ConvType::EdgeAttrConv => "edge_attr_conv",
        }
    }

    pub fn uses_attrs(self) -> bool {
        self == ConvType::EdgeAttrConv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_type: ConvType,
    pub hidden_dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// Number of attribute bins; required by `edge_attr_conv`.
    pub attr_dim: Option<usize>,
    /// Linear layers in the classifier head (the last maps to 2 logits).
    pub head_layers: usize,
    pub gin_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_type: ConvType::WeightedGcn,
            hidden_dim: 32,
            layers: 2,
            dropout: 0.0,
            activation: Activation::Relu,
            attr_dim: None,
            head_layers: 1,
            gin_eps: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn new(conv_type: ConvType) -> Self {
        ModelConfig {
            conv_type,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.head_layers == 0 {
            return Err(Error::Config("head_layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.gin_eps.is_finite() {
            return Err(Error::Config("gin_eps must be finite".into()));
        }
        match (self.conv_type.uses_attrs(), self.attr_dim) {
            (true, None) | (true, Some(0)) => Err(Error::Config(
                "edge_attr_conv needs attr_dim (the number of attribute bins)".into(),
            )),
            _ => Ok(()),
        }
    }

    /// (name, rows, cols) of every parameter in forward order.
    fn layout(&self, input_dim: usize) -> Vec<(String, usize, usize)> {
        let h = self.hidden_dim;
        let mut out = Vec::new();
        if let (true, Some(k)) = (self.conv_type.uses_attrs(), self.attr_dim) {
            out.push(("encoder".to_string(), k, h));
        }
        for l in 0..self.layers {
            let d = if l == 0 { input_dim } else { h };
            let p = |s: &str| format!("conv{l}.{s}");
            match self.conv_type {
                ConvType::WeightedGcn => {
                    out.push((p("weight"), d, h));
                    out.push((p("bias"), 1, h));
                }
                ConvType::SageMean | ConvType::EdgeAttrConv => {
                    out.push((p("weight_self"), d, h));
                    out.push((p("weight_neigh"), d, h));
                    out.push((p("bias"), 1, h));
                }
                ConvType::GinSum => {
                    out.push((p("mlp1.weight"), d, h));
                    out.push((p("mlp1.bias"), 1, h));
                    out.push((p("mlp2.weight"), h, h));
                    out.push((p("mlp2.bias"), 1, h));
                }
            }
        }
        for l in 0..self.head_layers {
            let cols = if l + 1 == self.head_layers { 2 } else { h };
            out.push((format!("head{l}.weight"), h, cols));
            out.push((format!("head{l}.bias"), 1, cols));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub params: Vec<Parameter>,
    /// Adam first and second moments, one per parameter.
    pub moment1: Vec<DMatrix<f64>>,
    pub moment2: Vec<DMatrix<f64>>,
    pub step: u64,
}

impl ModelState {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, input_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input feature dimension is zero".into()));
        }
        let mut params = Vec::new();
        for (name, r, c) in config.layout(input_dim) {
            let value = if name.ends_with("bias") {
                DMatrix::zeros(r, c)
            } else {
                let a = (6.0 / (r + c) as f64).sqrt();
                DMatrix::from_fn(r, c, |_, _| rng.random_range(-a..=a))
            };
            params.push(Parameter { name, value });
        }
        let zeros: Vec<_> = params
            .iter()
            .map(|p| DMatrix::zeros(p.value.nrows(), p.value.ncols()))
            .collect();
        Ok(ModelState {
            config: config.clone(),
            input_dim,
            moment1: zeros.clone(),
            moment2: zeros,
            params,
            step: 0,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn check(&self) -> Result<()> {
        let expect = self.config.layout(self.input_dim);
        if expect.len() != self.params.len()
            || self.moment1.len() != self.params.len()
            || self.moment2.len() != self.params.len()
        {
            return Err(Error::Shape("parameter list does not match the model config".into()));
        }
        for (i, ((name, r, c), p)) in expect.iter().zip(&self.params).enumerate() {
            let shape = (*r, *c);
            if p.name != *name
                || p.value.shape() != shape
                || self.moment1[i].shape() != shape
                || self.moment2[i].shape() != shape
            {
                return Err(Error::Shape(format!("parameter {} does not match `{name}` {r}x{c}", p.name)));
            }
            if p.value.iter().any(|x| !x.is_finite()) {
                return Err(Error::Precondition(format!("parameter {} is not finite", p.name)));
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let t = |m: &DMatrix<f64>| StoredTensor {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        };
        Checkpoint {
            config: self.config.clone(),
            input_dim: self.input_dim,
            step: self.step,
            params: self
                .params
                .iter()
                .zip(self.moment1.iter().zip(&self.moment2))
                .map(|(p, (m1, m2))| StoredParam {
                    name: p.name.clone(),
                    value: t(&p.value),
                    moment1: t(m1),
                    moment2: t(m2),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let mut state = ModelState {
            config: c.config,
            input_dim: c.input_dim,
            params: Vec::new(),
            moment1: Vec::new(),
            moment2: Vec::new(),
            step: c.step,
        };
        for p in c.params {
            state.params.push(Parameter {
                name: p.name,
                value: p.value.into_matrix()?,
            });
            state.moment1.push(p.moment1.into_matrix()?);
            state.moment2.push(p.moment2.into_matrix()?);
        }
        state.config.validate()?;
        state.check()?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// JSON form of a model: row-major tensors plus optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub step: u64,
    pub params: Vec<StoredParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub value: StoredTensor,
    pub moment1: StoredTensor,
    pub moment2: StoredTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl StoredTensor {
    fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} tensor",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// A graph compiled into the sparse operators one conv type needs.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    conv_type: ConvType,
    features: DMatrix<f64>,
    /// Node-to-node aggregation (all types but `edge_attr_conv`).
    aggregate: Option<Arc<Sparse>>,
    /// Edge-level operators for `edge_attr_conv`.
    edge: Option<EdgeOps>,
}

#[derive(Debug, Clone)]
struct EdgeOps {
    gather_src: Arc<Sparse>,
    scatter_dst: Arc<Sparse>,
    /// Encoder rows per edge; `None` means all-zero attributes.
    encode: Option<Arc<Sparse>>,
}

impl PreparedGraph {
    /// Uses the graph's weights when present (unit weights otherwise) and,
    /// for `edge_attr_conv`, its edge attributes, which must exist.
    pub fn new(g: &AugmentedGraph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let bins = match (config.conv_type.uses_attrs(), g.edge_bins()) {
            (true, None) => {
                return Err(Error::Precondition(
                    "edge_attr_conv needs edge attributes; augment with attr or both mode".into(),
                ))
            }
            (true, Some(b)) => {
                let k = g.num_bins().unwrap_or(0);
                if Some(k) != config.attr_dim {
                    return Err(Error::Config(format!(
                        "graph has {k} attribute bins but the model expects {:?}",
                        config.attr_dim
                    )));
                }
                Some((b, k))
            }
            (false, _) => None,
        };
        Self::build(g.base(), g.edge_weights(), bins, config)
    }

    /// Unit weights and zero edge attributes: the unaugmented arm.
    pub fn baseline(g: &Graph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Self::build(g, None, None, config)
    }

    fn build(
        g: &Graph,
        weights: Option<&[f64]>,
        bins: Option<(&[usize], usize)>,
        config: &ModelConfig,
    ) -> Result<Self> {
        let n = g.num_nodes();
        let edges = g.edges();
        let w = |e: usize| weights.map_or(1.0, |w| w[e]);
        if let Some(ws) = weights {
            if ws.len() != edges.len() {
                return Err(Error::Shape(format!("{} weights for {} edges", ws.len(), edges.len())));
            }
            if ws.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Precondition("edge weights must be finite and non-negative".into()));
            }
        }
        // Incoming weight per node.
        let mut win = vec![0.0; n];
        for (e, &(_, dst)) in edges.iter().enumerate() {
            win[dst] += w(e);
        }
        let mut aggregate = None;
        let mut edge = None;
        match config.conv_type {
            ConvType::WeightedGcn => {
                let deg: Vec<f64> = win.iter().map(|d| 1.0 + d).collect();
                let mut entries: Vec<_> = edges
                    .iter()
                    .enumerate()
                    .map(|(e, &(s, d))| (d, s, w(e) / (deg[d] * deg[s]).sqrt()))
                    .collect();
                entries.extend((0..n).map(|i| (i, i, 1.0 / deg[i])));
                aggregate = Some(Arc::new(Sparse::new(n, n, entries)));
            }
            ConvType::SageMean => {
                let entries = edges
                    .iter()
                    .enumerate()
                    .filter(|&(_, &(_, d))| win[d] > 0.0)
                    .map(|(e, &(s, d))| (d, s, w(e) / win[d]))
                    .collect();
                aggregate = Some(Arc::new(Sparse::new(n, n, entries)));
            }
            ConvType::GinSum => {
                let mut entries: Vec<_> = edges.iter().enumerate().map(|(e, &(s, d))| (d, s, w(e))).collect();
                entries.extend((0..n).map(|i| (i, i, 1.0 + config.gin_eps)));
                aggregate = Some(Arc::new(Sparse::new(n, n, entries)));
            }
            ConvType::EdgeAttrConv => {
                let m = edges.len();
                let gather = edges.iter().enumerate().map(|(e, &(s, _))| (e, s, 1.0)).collect();
                let scatter = edges
                    .iter()
                    .enumerate()
                    .filter(|&(_, &(_, d))| win[d] > 0.0)
                    .map(|(e, &(_, d))| (d, e, w(e) / win[d]))
                    .collect();
                let encode = bins.map(|(b, k)| {
                    Arc::new(Sparse::new(m, k, b.iter().enumerate().map(|(e, &bin)| (e, bin, 1.0)).collect()))
                });
                edge = Some(EdgeOps {
                    gather_src: Arc::new(Sparse::new(m, n, gather)),
                    scatter_dst: Arc::new(Sparse::new(n, m, scatter)),
                    encode,
                });
            }
        }
        Ok(PreparedGraph {
            conv_type: config.conv_type,
            features: g.features().clone(),
            aggregate,
            edge,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

pub(crate) struct Forward {
    pub tape: Tape,
    pub logits: Var,
}

/// Runs the network on the tape. `dropout_rng` enables dropout (training).
pub(crate) fn forward_tape(
    state: &ModelState,
    g: &PreparedGraph,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Forward> {
    let cfg = &state.config;
    if g.conv_type != cfg.conv_type {
        return Err(Error::Config(format!(
            "graph prepared for {} but model is {}",
            g.conv_type.name(),
            cfg.conv_type.name()
        )));
    }
    if g.feature_dim() != state.input_dim {
        return Err(Error::Config(format!(
            "graph has {} features but the model expects {}",
            g.feature_dim(),
            state.input_dim
        )));
    }
    let mut tape = Tape::new();
    let params: Vec<Var> = state
        .params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p.value.clone()))
        .collect();
    let mut next = params.into_iter();
    let mut take = || next.next().expect("parameter layout matches config");

    let encoder = if cfg.conv_type.uses_attrs() { Some(take()) } else { None };
    let mut h = tape.input(g.features.clone());
    for _ in 0..cfg.layers {
        if let Some(rng) = dropout_rng.as_deref_mut() {
            if cfg.dropout > 0.0 {
                let keep = 1.0 - cfg.dropout;
                let (r, c) = tape.value(h).shape();
                let m = DMatrix::from_fn(r, c, |_, _| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
                h = tape.mask(h, m);
            }
        }
        h = match cfg.conv_type {
            ConvType::WeightedGcn => {
                let (w, b) = (take(), take());
                let agg = g.aggregate.as_ref().expect("prepared aggregate");
                let xw = tape.matmul(h, w);
                let m = tape.propagate(xw, agg);
                let z = tape.add_row(m, b);
                tape.relu(z)
            }
            ConvType::SageMean => {
                let (ws, wn, b) = (take(), take(), take());
                let agg = g.aggregate.as_ref().expect("prepared aggregate");
                let selfp = tape.matmul(h, ws);
                let mean = tape.propagate(h, agg);
                let neigh = tape.matmul(mean, wn);
                let s = tape.add(selfp, neigh);
                let z = tape.add_row(s, b);
                tape.relu(z)
            }
            ConvType::GinSum => {
                let (w1, b1, w2, b2) = (take(), take(), take(), take());
                let agg = g.aggregate.as_ref().expect("prepared aggregate");
                let s = tape.propagate(h, agg);
                let u = tape.matmul(s, w1);
                let u = tape.add_row(u, b1);
                let u = tape.relu(u);
                let o = tape.matmul(u, w2);
                let o = tape.add_row(o, b2);
                tape.relu(o)
            }
            ConvType::EdgeAttrConv => {
                let (ws, wn, b) = (take(), take(), take());
                let ops = g.edge.as_ref().expect("prepared edge operators");
                let hn = tape.matmul(h, wn);
                let mut msg = tape.propagate(hn, &ops.gather_src);
                if let (Some(enc_op), Some(enc)) = (&ops.encode, encoder) {
                    let e = tape.propagate(enc, enc_op);
                    msg = tape.add(msg, e);
                }
                let msg = tape.relu(msg);
                let m = tape.propagate(msg, &ops.scatter_dst);
                let selfp = tape.matmul(h, ws);
                let s = tape.add(selfp, m);
                let z = tape.add_row(s, b);
                tape.relu(z)
            }
        };
    }
    for l in 0..cfg.head_layers {
        let (w, b) = (take(), take());
        let z = tape.matmul(h, w);
        h = tape.add_row(z, b);
        if l + 1 < cfg.head_layers {
            h = tape.relu(h);
        }
    }
    Ok(Forward { tape, logits: h })
}

/// Inference-mode logits, `num_nodes x 2`.
pub fn forward(state: &ModelState, g: &PreparedGraph) -> Result<DMatrix<f64>> {
    let f = forward_tape(state, g, None)?;
    let logits = f.tape.value(f.logits).clone();
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("forward pass produced non-finite logits".into()));
    }
    Ok(logits)
}

/// Probability of the anomalous class per node.
pub fn anomaly_scores(logits: &DMatrix<f64>) -> Vec<f64> {
    logits
        .row_iter()
        .map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp()))
        .collect()
}
