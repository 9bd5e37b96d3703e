//! Planting anomalies into clean attributed graphs, and generating clean
//! community graphs to plant them into.
//!
//! Structural anomalies: `m * n` benign nodes are split into `n` groups of
//! `m`; each pair inside a group that is not yet adjacent gains an undirected
//! edge with probability `1 - p`. Contextual anomalies: each of `m * n`
//! benign nodes takes the feature row of the most distant (Euclidean) of `q`
//! nodes sampled from the rest of the graph. Both only pick nodes still
//! labeled benign, so applying one after the other yields disjoint sets.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Nodes per group.
    pub m: usize,
    /// Number of groups.
    pub n: usize,
    /// Structural mode adds each missing intra-group edge with probability `1 - p`.
    #[serde(default)]
    pub p: f64,
    /// Contextual candidate pool size.
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_q() -> usize {
    50
}

impl InjectionConfig {
    pub fn structural(m: usize, n: usize, p: f64, seed: u64) -> Self {
        InjectionConfig { m, n, p, q: default_q(), seed }
    }

    pub fn contextual(m: usize, n: usize, q: usize, seed: u64) -> Self {
        InjectionConfig { m, n, p: 0.0, q, seed }
    }

    pub fn count(&self) -> usize {
        self.m * self.n
    }

    fn validate(&self, g: &Graph, structural: bool) -> Result<()> {
        if structural && self.m < 2 {
            return Err(Error::Config(format!("structural groups need m >= 2, got {}", self.m)));
        }
        if self.count() == 0 {
            return Err(Error::Config("m * n must be positive".into()));
        }
        if 2 * self.count() > g.num_nodes() {
            return Err(Error::Config(format!(
                "m * n = {} exceeds half of the {} nodes",
                self.count(),
                g.num_nodes()
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if !structural && self.q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        let benign = g.num_nodes() - g.num_anomalies();
        if benign < self.count() {
            return Err(Error::Config(format!(
                "only {benign} benign nodes available for {} anomalies",
                self.count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralManifest {
    pub groups: Vec<Vec<NodeId>>,
    /// Intra-group pairs that were not adjacent before injection.
    pub eligible_pairs: usize,
    /// Undirected edges added (each stored as two directed edges).
    pub added_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualManifest {
    pub nodes: Vec<NodeId>,
    /// Node whose features were copied onto `nodes[i]`.
    pub sources: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub structural: Option<StructuralManifest>,
    pub contextual: Option<ContextualManifest>,
}

impl InjectionManifest {
    pub fn anomalous_nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .structural
            .iter()
            .flat_map(|s| s.groups.iter().flatten().copied())
            .chain(self.contextual.iter().flat_map(|c| c.nodes.iter().copied()))
            .collect();
        v.sort_unstable();
        v
    }
}

fn benign_nodes(g: &Graph) -> Vec<NodeId> {
    (0..g.num_nodes()).filter(|&i| g.labels()[i] == 0).collect()
}

pub fn inject_structural(g: &Graph, cfg: &InjectionConfig) -> Result<(Graph, StructuralManifest)> {
    cfg.validate(g, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = benign_nodes(g);
    let chosen: Vec<NodeId> = index::sample(&mut rng, pool.len(), cfg.count())
        .into_iter()
        .map(|i| pool[i])
        .collect();

    let (num_nodes, mut edges, features, mut labels, directed, loops) = g.clone().into_parts();
    let mut present: HashSet<(NodeId, NodeId)> = edges.iter().copied().collect();
    let mut eligible_pairs = 0;
    let mut added_edges = 0;
    let groups: Vec<Vec<NodeId>> = chosen.chunks(cfg.m).map(<[NodeId]>::to_vec).collect();
    for group in &groups {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                if present.contains(&(a, b)) || present.contains(&(b, a)) {
                    continue;
                }
                eligible_pairs += 1;
                if rng.random_bool(1.0 - cfg.p) {
                    edges.push((a, b));
                    edges.push((b, a));
                    present.insert((a, b));
                    present.insert((b, a));
                    added_edges += 1;
                }
            }
        }
    }
    for &v in &chosen {
        labels[v] = 1;
    }
    let out = Graph::from_parts_unchecked(num_nodes, edges, features, labels, directed, loops);
    Ok((
        out,
        StructuralManifest {
            groups,
            eligible_pairs,
            added_edges,
        },
    ))
}

pub fn inject_contextual(g: &Graph, cfg: &InjectionConfig) -> Result<(Graph, ContextualManifest)> {
    cfg.validate(g, false)?;
    if g.feature_dim() == 0 {
        return Err(Error::Precondition("contextual injection needs node features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = benign_nodes(g);
    let chosen: Vec<NodeId> = index::sample(&mut rng, pool.len(), cfg.count())
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let chosen_set: HashSet<NodeId> = chosen.iter().copied().collect();
    let rest: Vec<NodeId> = (0..g.num_nodes()).filter(|v| !chosen_set.contains(v)).collect();
    if cfg.q > rest.len() {
        return Err(Error::Config(format!(
            "q = {} exceeds the {} remaining nodes",
            cfg.q,
            rest.len()
        )));
    }

    let original = g.features();
    let mut features = original.clone();
    let mut sources = Vec::with_capacity(chosen.len());
    for &v in &chosen {
        let candidates: Vec<NodeId> = index::sample(&mut rng, rest.len(), cfg.q)
            .into_iter()
            .map(|i| rest[i])
            .collect();
        let src = most_distant(original, v, &candidates);
        features.set_row(v, &original.row(src));
        sources.push(src);
    }
    let (num_nodes, edges, _, mut labels, directed, loops) = g.clone().into_parts();
    for &v in &chosen {
        labels[v] = 1;
    }
    let out = Graph::from_parts_unchecked(num_nodes, edges, features, labels, directed, loops);
    Ok((out, ContextualManifest { nodes: chosen, sources }))
}

/// Candidate whose feature row is farthest from row `v`; ties go to the
/// lowest node id.
pub fn most_distant(features: &DMatrix<f64>, v: NodeId, candidates: &[NodeId]) -> NodeId {
    let target = features.row(v);
    let mut best: Option<(f64, NodeId)> = None;
    for &c in candidates {
        let d = (features.row(c) - target).norm_squared();
        best = match best {
            Some((bd, bn)) if d < bd || (d == bd && bn < c) => Some((bd, bn)),
            _ => Some((d, c)),
        };
    }
    best.expect("at least one candidate").1
}

/// Structural injection (if any) followed by contextual injection (if any).
pub fn inject(
    g: &Graph,
    structural: Option<&InjectionConfig>,
    contextual: Option<&InjectionConfig>,
) -> Result<(Graph, InjectionManifest)> {
    let mut manifest = InjectionManifest::default();
    let mut g = g.clone();
    if let Some(cfg) = structural {
        let (out, m) = inject_structural(&g, cfg)?;
        g = out;
        manifest.structural = Some(m);
    }
    if let Some(cfg) = contextual {
        let (out, m) = inject_contextual(&g, cfg)?;
        g = out;
        manifest.contextual = Some(m);
    }
    Ok((g, manifest))
}

/// Planted-partition graph with Gaussian features around per-community means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub communities: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub seed: u64,
    /// Standard deviation of the per-node noise around the community mean.
    #[serde(default = "default_noise")]
    pub feature_noise: f64,
}

fn default_noise() -> f64 {
    1.0
}

impl SyntheticSpec {
    /// 2708 nodes, 64 features, 7 communities and mean degree near 4.
    pub fn cora_scale(seed: u64) -> Self {
        SyntheticSpec {
            num_nodes: 2708,
            feature_dim: 64,
            communities: 7,
            intra_p: 0.008,
            inter_p: 0.0004,
            seed,
            feature_noise: 1.0,
        }
    }

    pub fn community_of(&self, node: NodeId) -> usize {
        node * self.communities / self.num_nodes
    }
}

pub fn generate_clean_graph(spec: &SyntheticSpec) -> Result<Graph> {
    let SyntheticSpec {
        num_nodes: n,
        feature_dim: d,
        communities: c,
        intra_p,
        inter_p,
        seed,
        feature_noise,
    } = *spec;
    if n == 0 || d == 0 || c == 0 || c > n {
        return Err(Error::Config(format!(
            "need num_nodes, feature_dim > 0 and 1 <= communities <= num_nodes (got {n}, {d}, {c})"
        )));
    }
    for p in [intra_p, inter_p] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
    }
    if !(feature_noise >= 0.0 && feature_noise.is_finite()) {
        return Err(Error::Config(format!("feature_noise must be non-negative, got {feature_noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let means = DMatrix::from_fn(c, d, |_, _| normal());
    let mut features = DMatrix::zeros(n, d);
    for i in 0..n {
        let k = spec.community_of(i);
        for j in 0..d {
            features[(i, j)] = means[(k, j)] + feature_noise * normal();
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if spec.community_of(i) == spec.community_of(j) {
                intra_p
            } else {
                inter_p
            };
            if p > 0.0 && rng.random_bool(p) {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    Graph::new(n, edges, features, vec![0; n], false)
}
