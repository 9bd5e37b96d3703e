mod common;

use std::collections::HashSet;

use ctrlgad::augment::{augment, build_histogram, AugmentMode};
use ctrlgad::controllability::{average_controllability, ControllabilityConfig, Quadrature};
use ctrlgad::gnn::{forward, ConvType, ModelConfig, ModelState, PreparedGraph};
use ctrlgad::inject::{inject, InjectionConfig};
use ctrlgad::metrics::{aggregate, auprc, auroc, rec_at_k, MetricTriple, RankedScores, TopK};
use ctrlgad::Graph;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradient_check, linear_scan_bin, off_kink, random_symmetric_graph};

fn directed_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges, DMatrix::zeros(n, 1), vec![0; n], true).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn symmetrize_is_idempotent(n in 1usize..25, p in 0.0f64..0.5, seed in any::<u64>()) {
        let g = directed_graph(n, p, seed);
        let s = g.symmetrize();
        prop_assert!(s.is_symmetric());
        prop_assert_eq!(s.symmetrize(), s.clone());
        let orig: HashSet<_> = g.edges().iter().copied().collect();
        let sym: HashSet<_> = s.edges().iter().copied().collect();
        prop_assert!(orig.is_subset(&sym));
        for &(u, v) in &sym {
            prop_assert!(orig.contains(&(u, v)) || orig.contains(&(v, u)));
        }
    }

    #[test]
    fn histogram_bins_match_scan(values in prop::collection::vec(-5.0f64..5.0, 1..40), k in 1usize..40) {
        let edges = build_histogram(&values, k).unwrap();
        prop_assert_eq!(edges.len(), k + 1);
        prop_assert!(edges.windows(2).all(|w| w[0] <= w[1]));
        for &v in &values {
            prop_assert_eq!(ctrlgad::augment::bin_index(v, &edges), linear_scan_bin(v, &edges));
        }
    }

    #[test]
    fn metrics_depend_only_on_ranks(
        raw in prop::collection::vec((0.0f64..1.0, prop::bool::ANY), 4..60),
    ) {
        let scores: Vec<f64> = raw.iter().map(|x| x.0).collect();
        let mut labels: Vec<u8> = raw.iter().map(|x| u8::from(x.1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let r = RankedScores::unmasked(scores.clone(), labels.clone()).unwrap();
        let moved = RankedScores::unmasked(scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect(), labels.clone()).unwrap();
        prop_assert_eq!(auroc(&r).unwrap(), auroc(&moved).unwrap());
        prop_assert_eq!(auprc(&r).unwrap(), auprc(&moved).unwrap());
        prop_assert_eq!(rec_at_k(&r, TopK::Auto).unwrap(), rec_at_k(&moved, TopK::Auto).unwrap());

        // Pairwise oracle.
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auroc(&r).unwrap() - num / den).abs() < 1e-12);

        // Rec@K with K = #positives equals precision at K.
        let pos = labels.iter().filter(|&&l| l == 1).count();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let hits = order[..pos].iter().filter(|&&i| labels[i] == 1).count();
        prop_assert_eq!(rec_at_k(&r, TopK::Auto).unwrap(), hits as f64 / pos as f64);
    }

    #[test]
    fn auroc_flips_with_negated_scores(
        labels in prop::collection::vec(prop::bool::ANY, 4..50),
        seed in any::<u64>(),
    ) {
        let mut labels: Vec<u8> = labels.into_iter().map(u8::from).collect();
        labels[0] = 1;
        labels[1] = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Continuous draws: ties have probability zero.
        let scores: Vec<f64> = (0..labels.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = auroc(&RankedScores::unmasked(scores.clone(), labels.clone()).unwrap()).unwrap();
        let b = auroc(&RankedScores::unmasked(scores.iter().map(|s| -s).collect(), labels).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn injected_sets_are_disjoint(seed in any::<u64>(), p in 0.0f64..1.0) {
        let g = random_symmetric_graph(80, 0.05, 4, seed).with_labels(vec![0; 80]).unwrap();
        let s = InjectionConfig::structural(4, 3, p, seed);
        let c = InjectionConfig::contextual(3, 4, 10, seed.wrapping_add(1));
        let (out, m) = inject(&g, Some(&s), Some(&c)).unwrap();
        let st: HashSet<_> = m.structural.as_ref().unwrap().groups.iter().flatten().copied().collect();
        let ct: HashSet<_> = m.contextual.as_ref().unwrap().nodes.iter().copied().collect();
        prop_assert_eq!(st.len(), 12);
        prop_assert_eq!(ct.len(), 12);
        prop_assert!(st.is_disjoint(&ct));
        prop_assert_eq!(out.num_anomalies(), 24);
        prop_assert!(out.is_symmetric());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn controllability_is_permutation_equivariant(n in 2usize..30, p in 0.0f64..0.4, seed in any::<u64>()) {
        let g = random_symmetric_graph(n, p, 1, seed);
        let perm = shuffled(n, seed ^ 1);
        let pg = g.permute(&perm).unwrap();
        let cfg = ControllabilityConfig::default();
        let a = average_controllability(&g, &cfg).unwrap().scores;
        let b = average_controllability(&pg, &cfg).unwrap().scores;
        for i in 0..n {
            prop_assert!((a[i] - b[perm[i]]).abs() < 1e-10);
        }
        prop_assert!(a.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn trapezoid_never_worse_on_isolated_nodes(dt in 0.01f64..0.5) {
        let g = Graph::new(3, vec![], DMatrix::zeros(3, 1), vec![0; 3], false).unwrap();
        let run = |q| {
            let cfg = ControllabilityConfig { step_size: dt, quadrature: q, ..Default::default() };
            average_controllability(&g, &cfg).unwrap()
        };
        let r = run(Quadrature::RightRiemann);
        let t = run(Quadrature::Trapezoidal);
        let steps = r.steps_used;
        let geometric: f64 = (1..=steps).map(|i| dt * (-2.0 * i as f64 * dt).exp()).sum();
        prop_assert!((r.scores[0] - geometric).abs() < 1e-12);
        prop_assert!((t.scores[0] - 0.5).abs() <= (r.scores[0] - 0.5).abs());
    }

    #[test]
    fn gradients_match_finite_differences(n in 2usize..10, seed in any::<u64>(), conv in 0usize..4) {
        let conv = ConvType::ALL[conv];
        let g = random_symmetric_graph(n, 0.4, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let cfg = ModelConfig { hidden_dim: 3, attr_dim: Some(4), ..ModelConfig::new(conv) };
        let mode = if conv.uses_attrs() { AugmentMode::Both { bins: 4 } } else { AugmentMode::Weight };
        let p = PreparedGraph::new(&augment(&g, &sc, mode).unwrap(), &cfg).unwrap();
        let mut state = ModelState::init(&cfg, 3, &mut ChaCha8Rng::seed_from_u64(seed ^ 7)).unwrap();
        off_kink(&mut state, seed ^ 9);
        let err = gradient_check(&state, &p, g.labels(), &vec![true; n], 1.7, 1e-5);
        prop_assert!(err < 1e-4, "{:?}: {}", conv, err);
    }

    #[test]
    fn forward_is_permutation_equivariant(n in 2usize..20, seed in any::<u64>(), conv in 0usize..4) {
        let conv = ConvType::ALL[conv];
        let g = random_symmetric_graph(n, 0.3, 2, seed);
        let perm = shuffled(n, seed ^ 3);
        let pg = g.permute(&perm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut psc = vec![0.0; n];
        for i in 0..n {
            psc[perm[i]] = sc[i];
        }
        let cfg = ModelConfig { attr_dim: Some(5), ..ModelConfig::new(conv) };
        let mode = if conv.uses_attrs() { AugmentMode::Attr { bins: 5 } } else { AugmentMode::Weight };
        let s = ModelState::init(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = forward(&s, &PreparedGraph::new(&augment(&g, &sc, mode).unwrap(), &cfg).unwrap()).unwrap();
        let b = forward(&s, &PreparedGraph::new(&augment(&pg, &psc, mode).unwrap(), &cfg).unwrap()).unwrap();
        for i in 0..n {
            for c in 0..2 {
                prop_assert!((a[(i, c)] - b[(perm[i], c)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn random_scores_average_precision_near_prevalence() {
    let (n, pos, trials) = (200, 20, 2000);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let values: Vec<f64> = (0..trials)
        .map(|_| {
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let labels: Vec<u8> = (0..n).map(|i| u8::from(i < pos)).collect();
            auprc(&RankedScores::unmasked(scores, labels).unwrap()).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / trials as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
    // Exact expectation of AP under a uniformly random ranking.
    let expected: f64 = (1..=n)
        .map(|k| {
            // P(item at rank k is positive) * E[precision at k | positive at k]
            let pk = pos as f64 / n as f64;
            let prec = (1.0 + (k - 1) as f64 * (pos - 1) as f64 / (n - 1) as f64) / k as f64;
            pk * prec
        })
        .sum::<f64>()
        / pos as f64;
    assert!((mean - expected).abs() < 3.0 * sd / (trials as f64).sqrt(), "{mean} vs {expected}");
    assert!((expected - pos as f64 / n as f64).abs() < 0.03);
}

#[test]
fn aggregate_matches_recomputation() {
    let values = [0.61, 0.72, 0.55, 0.69, 0.7, 0.58, 0.66, 0.74, 0.63, 0.6];
    let triples: Vec<_> = values
        .iter()
        .map(|&v| MetricTriple { auroc: v, auprc: v / 2.0, rec_at_k: 1.0 - v })
        .collect();
    let r = aggregate(&triples).unwrap();
    let mean = values.iter().sum::<f64>() / 10.0;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0;
    assert!((r.auroc.mean - mean).abs() < 1e-15);
    assert!((r.auroc.sd - var.sqrt()).abs() < 1e-15);
    assert!((r.auprc.mean - mean / 2.0).abs() < 1e-15);
    assert_eq!(r.per_seed.len(), 10);
}
