//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use ctrlgad::gnn::{loss_and_gradients, ModelState, PreparedGraph};
use ctrlgad::Graph;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random undirected graph stored with both directions; features ~ U(-1, 1).
pub fn random_symmetric_graph(n: usize, p: f64, dim: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    let features = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0));
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    labels[0] = 1;
    if n > 1 {
        labels[n - 1] = 0;
    }
    Graph::new(n, edges, features, labels, false).unwrap()
}

/// Bin of `v` by scanning the intervals `[e_i, e_{i+1})`, last one closed.
pub fn linear_scan_bin(v: f64, edges: &[f64]) -> usize {
    let k = edges.len() - 1;
    if edges[0] == edges[k] {
        return 0;
    }
    for i in 0..k {
        let upper_ok = if i + 1 == k { v <= edges[k] } else { v < edges[i + 1] };
        if v >= edges[i] && upper_ok {
            return i;
        }
    }
    panic!("{v} outside the histogram range");
}

/// Norm-wise relative error between analytic and central-difference
/// gradients of the training loss over every parameter entry.
pub fn gradient_check(
    state: &ModelState,
    g: &PreparedGraph,
    labels: &[u8],
    mask: &[bool],
    weight: f64,
    h: f64,
) -> f64 {
    let (_, analytic) = loss_and_gradients(state, g, labels, mask, weight).unwrap();
    let mut s = state.clone();
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for p in 0..s.params.len() {
        for k in 0..s.params[p].value.len() {
            let orig = s.params[p].value[k];
            s.params[p].value[k] = orig + h;
            let (up, _) = loss_and_gradients(&s, g, labels, mask, weight).unwrap();
            s.params[p].value[k] = orig - h;
            let (down, _) = loss_and_gradients(&s, g, labels, mask, weight).unwrap();
            s.params[p].value[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p][k];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-300)
}

/// Shifts every parameter by U(-0.1, 0.1). Fresh models have zero biases,
/// which put hidden units with all-zero input exactly on the ReLU kink,
/// where central differences see a slope of 1/2.
pub fn off_kink(state: &mut ModelState, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut state.params {
        for x in p.value.iter_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
}
