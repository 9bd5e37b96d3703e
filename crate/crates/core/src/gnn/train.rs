use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{weighted_cross_entropy, ClassWeight};
use super::model::{forward_tape, ModelConfig, ModelState, PreparedGraph};
use crate::error::{Error, Result};

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Independent generator for one purpose under one seed.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub class_weight: ClassWeight,
    pub seeds: Vec<u64>,
    pub split: SplitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            class_weight: ClassWeight::Auto,
            seeds: (0..10).collect(),
            split: SplitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("train_fraction {f} outside (0, 1)")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Train mask for one seed. Stratified splits take `round(fraction * size)`
/// nodes from each class separately.
pub fn split_nodes(labels: &[u8], split: &SplitConfig, seed: u64) -> Vec<bool> {
    let mut rng = stream(seed, SPLIT_STREAM);
    let groups: Vec<Vec<usize>> = if split.stratified {
        (0..=1u8)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut mask = vec![false; labels.len()];
    for mut g in groups {
        g.shuffle(&mut rng);
        let take = (split.train_fraction * g.len() as f64).round() as usize;
        for &i in &g[..take.min(g.len())] {
            mask[i] = true;
        }
    }
    mask
}

/// Loss on the masked nodes and its gradient for every parameter, without
/// dropout.
pub fn loss_and_gradients(
    state: &ModelState,
    g: &PreparedGraph,
    labels: &[u8],
    mask: &[bool],
    anomaly_weight: f64,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    step_gradients(state, g, labels, mask, anomaly_weight, None)
}

fn step_gradients(
    state: &ModelState,
    g: &PreparedGraph,
    labels: &[u8],
    mask: &[bool],
    anomaly_weight: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let f = forward_tape(state, g, dropout)?;
    let (loss, seed) = weighted_cross_entropy(f.tape.value(f.logits), labels, mask, anomaly_weight)?;
    let grads = f.tape.backward(f.logits, seed, state.params.len());
    let grads = grads
        .into_iter()
        .zip(&state.params)
        .map(|(g, p)| {
            let g = g.unwrap_or_else(|| DMatrix::zeros(p.value.nrows(), p.value.ncols()));
            if g.iter().all(|x| x.is_finite()) {
                Ok(g)
            } else {
                Err(Error::NonFiniteGradient { param: p.name.clone() })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    /// Training loss before each update.
    pub loss_trace: Vec<f64>,
    pub anomaly_weight: f64,
}

/// Full-batch Adam on the nodes in `train_mask`.
pub fn train(
    g: &PreparedGraph,
    labels: &[u8],
    train_mask: &[bool],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if labels.len() != g.num_nodes() || train_mask.len() != g.num_nodes() {
        return Err(Error::Shape(format!(
            "{} nodes, {} labels, {} mask entries",
            g.num_nodes(),
            labels.len(),
            train_mask.len()
        )));
    }
    let anomaly_weight = tcfg.class_weight.resolve(labels, train_mask)?;
    let mut state = ModelState::init(mcfg, g.feature_dim(), &mut stream(seed, INIT_STREAM))?;
    let mut dropout_rng = stream(seed, DROPOUT_STREAM);
    let adam = Adam::new(tcfg.learning_rate);
    let mut loss_trace = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        let (loss, grads) = step_gradients(&state, g, labels, train_mask, anomaly_weight, Some(&mut dropout_rng))?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_trace.push(loss);
        adam.step(&mut state, &grads);
    }
    Ok(TrainOutcome {
        state,
        loss_trace,
        anomaly_weight,
    })
}
