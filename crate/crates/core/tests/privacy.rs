//! Clipping, noise, the metric-DP accountant, ρ selection and the attribute
//! inference attack.

use std::collections::BTreeSet;

use fedgnn::graph::{build_graph, ClientId, EdgeId, EdgeRecord, NodeId, NodeRecord};
use fedgnn::model::{Activation, Arch, ModelConfig, ModelParams, TaskKind};
use fedgnn::privacy::{
    aia_attack, clip_and_noise, kth_neighbor_distances, mdp_epsilon, nearest_rank, per_node_epsilon, privacy_report,
    rho_percentiles, AttackConfig, AttackKnowledge, PrivacyError, ReleaseHistory,
};
use fedgnn::rng::{stream, Purpose};
use proptest::prelude::*;
use rand::Rng;

/// Minimum over α found by scipy (10⁶-point grid plus bounded refinement).
const GOLDEN: [(f64, f64, u64, f64, f64); 6] = [
    (1.0, 1.0, 1, 1e-5, 4.728386984943314),
    (2.0, 1.0, 1, 1e-5, 10.72482411293917),
    (2.0, 3.0, 10, 1e-4, 10.308522815877712),
    (2.0, 0.5, 1, 1e-6, 27.81196850191077),
    (0.5, 2.0, 50, 1e-5, 9.233982918271076),
    (2.0, 5.0, 100, 1e-3, 21.41297232063808),
];

#[test]
fn epsilon_matches_frozen_golden_values() {
    for (rho, sigma0, rounds, delta, expected) in GOLDEN {
        let eps = mdp_epsilon(rho, sigma0, rounds, delta).unwrap();
        assert!((eps - expected).abs() <= 1e-3 * expected, "{rho} {sigma0} {rounds} {delta}: {eps} vs {expected}");
    }
}

#[test]
fn huge_noise_gives_tiny_epsilon() {
    assert!(mdp_epsilon(1.0, 1e6, 1, 1e-4).unwrap() < 0.01);
}

#[test]
fn zero_noise_is_infinite_and_bad_inputs_rejected() {
    assert_eq!(mdp_epsilon(1.0, 0.0, 1, 1e-4).unwrap(), f64::INFINITY);
    assert!(matches!(mdp_epsilon(-1.0, 1.0, 1, 1e-4), Err(PrivacyError::InvalidParameter { .. })));
    assert!(mdp_epsilon(1.0, 1.0, 1, 1.0).is_err());
    assert!(mdp_epsilon(1.0, 1.0, 0, 1e-4).is_err());
}

#[test]
fn clipping_rescales_onto_the_ball() {
    let mut r = stream(0, Purpose::ReleaseNoise, 0, 0, 0);
    assert_eq!(clip_and_noise(&[3.0, 4.0], 2.5, 0.0, &mut r), vec![1.5, 2.0]);
    assert_eq!(clip_and_noise(&[0.3, 0.4], 2.5, 0.0, &mut r), vec![0.3, 0.4]);
}

#[test]
fn unit_noise_has_unit_variance() {
    let mut r = stream(1, Purpose::ReleaseNoise, 0, 0, 0);
    let n = 100_000;
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for _ in 0..n {
        let z = clip_and_noise(&[0.0; 3], 1.0, 1.0, &mut r);
        for k in 0..3 {
            sums[k] += z[k];
            sq[k] += z[k] * z[k];
        }
    }
    for k in 0..3 {
        let mean = sums[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        assert!((var - 1.0).abs() <= 0.03, "coordinate {k}: variance {var}");
    }
}

#[test]
fn axis_points_have_sqrt2_neighbor_distance() {
    let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    let d = kth_neighbor_distances(&pts, 1).unwrap();
    assert!(d.iter().all(|&x| (x - 2f64.sqrt()).abs() < 1e-15));
    let rho = rho_percentiles(&pts, 1, &[50.0]).unwrap();
    assert!((rho[0] - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn rho_ignores_scale_and_drops_zero_vectors() {
    let mut r = stream(2, Purpose::Generate, 0, 0, 0);
    let pts: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x * 7.0).collect()).collect();
    let mut with_zero = pts.clone();
    with_zero.push(vec![0.0; 4]);
    let qs = [50.0, 90.0, 100.0];
    let base = rho_percentiles(&pts, 3, &qs).unwrap();
    let s = rho_percentiles(&scaled, 3, &qs).unwrap();
    for (a, b) in base.iter().zip(&s) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert_eq!(rho_percentiles(&with_zero, 3, &qs).unwrap(), base);
}

#[test]
fn too_few_points_is_an_error() {
    let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    assert!(matches!(rho_percentiles(&pts, 2, &[50.0]), Err(PrivacyError::TooFewPoints { .. })));
    assert!(matches!(
        rho_percentiles(&[vec![1.0, 0.0], vec![1.0]], 1, &[50.0]),
        Err(PrivacyError::RaggedEmbeddings(..))
    ));
}

#[test]
fn nearest_rank_rule() {
    let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(nearest_rank(&sorted, 0.0), 1.0);
    assert_eq!(nearest_rank(&sorted, 40.0), 2.0);
    assert_eq!(nearest_rank(&sorted, 41.0), 3.0);
    assert_eq!(nearest_rank(&sorted, 100.0), 5.0);
}

#[test]
fn report_matches_hand_composition() {
    let mut r = stream(3, Purpose::Generate, 0, 0, 0);
    let mut h = ReleaseHistory::default();
    for round in 0..10 {
        for v in 0..30 {
            if round == 0 || v % 3 == 0 {
                let e: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
                h.record(v, &e);
            }
        }
    }
    assert_eq!(h.max_count(), 10);
    let sigmas = [0.5, 1.0, 2.0];
    let qs = [50.0, 90.0, 95.0, 99.0, 100.0];
    let report = privacy_report(&h, &sigmas, &qs, 5, 1e-5).unwrap();
    let points: Vec<Vec<f64>> = h.embeddings.values().cloned().collect();
    let rho = rho_percentiles(&points, 5, &qs).unwrap();
    assert_eq!(report.rho, rho);
    assert_eq!(report.rounds_shared, 10);
    for (i, &rq) in rho.iter().enumerate() {
        for (j, &s) in sigmas.iter().enumerate() {
            assert_eq!(report.epsilon[i][j], mdp_epsilon(rq, s, 10, 1e-5).unwrap());
        }
        assert!(report.epsilon[i].windows(2).all(|w| w[1] < w[0]));
    }
    let per_node = per_node_epsilon(&h, rho[0], 1.0, 1e-5).unwrap();
    assert_eq!(per_node.len(), 30);
    assert!(per_node.iter().all(|&(v, e)| if v % 3 == 0 { e == report.epsilon[0][1] } else { e < report.epsilon[0][1] }));
    assert!(report.to_csv().starts_with("percentile,rho,k,rounds_shared,delta,eps_sigma0_0.5,eps_sigma0_1,eps_sigma0_2\n50,"));
}

#[test]
fn single_release_gives_one_shared_round() {
    let mut h = ReleaseHistory::default();
    assert!(matches!(privacy_report(&h, &[1.0], &[50.0], 1, 1e-4), Err(PrivacyError::NoReleases)));
    h.record(0, &[1.0, 0.0]);
    h.record(1, &[0.0, 1.0]);
    let report = privacy_report(&h, &[1.0], &[50.0], 1, 1e-4).unwrap();
    assert_eq!(report.rounds_shared, 1);
}

#[test]
fn attack_started_at_truth_stops_immediately() {
    let nodes = (0..4)
        .map(|i| NodeRecord {
            id: NodeId(i),
            host: ClientId(0),
            features: vec![0.1 * i as f64, -0.2, 0.3],
            label: Some(0),
        })
        .collect();
    let edges = (1..4).map(|i| EdgeRecord { id: EdgeId(i), src: NodeId(0), dst: NodeId(i), features: vec![], label: None }).collect();
    let g = build_graph(nodes, edges, 1).unwrap();
    let cfg = ModelConfig { arch: Arch::SageMean, activation: Activation::Tanh, gin_eps: 0.0, input_dim: 3, hidden: vec![4, 4], num_classes: 2, task: TaskKind::Node };
    let p = ModelParams::init(cfg, &mut stream(0, Purpose::Init, 0, 0, 0));
    let background: BTreeSet<usize> = [1, 2, 3].into();
    let knowledge = AttackKnowledge::observe(&p, &g, 0, background).unwrap();
    let config = AttackConfig { init: Some(g.features(0).to_vec()), tolerance: 0.0, ..AttackConfig::default() };
    let r = aia_attack(&p, &g, 0, &knowledge, &config).unwrap();
    assert_eq!(r.objective, 0.0);
    assert_eq!(r.mse, 0.0);
    assert_eq!(r.iterations, 0);
    assert!(r.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_is_monotone(rho in 0.01f64..2.0, sigma0 in 0.1f64..5.0, rounds in 1u64..100, c in 0.1f64..10.0) {
        let e = |r: f64, s: f64, n: u64| mdp_epsilon(r, s, n, 1e-5).unwrap();
        let base = e(rho, sigma0, rounds);
        let tol = 1e-9 * base.max(1.0);
        prop_assert!(e(rho * 1.2, sigma0, rounds) >= base - tol);
        prop_assert!(e(rho, sigma0 * 1.2, rounds) <= base + tol);
        prop_assert!(e(rho, sigma0, rounds + 3) >= base - tol);
        prop_assert!((e(rho * c, sigma0 * c, rounds) - base).abs() <= tol);
    }

    #[test]
    fn clipped_norm_never_exceeds_bound(x in prop::collection::vec(-100.0f64..100.0, 1..8), c in 0.01f64..50.0) {
        let mut r = stream(0, Purpose::ReleaseNoise, 0, 0, 0);
        let y = clip_and_noise(&x, c, 0.0, &mut r);
        let n: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n <= c * (1.0 + 1e-12));
    }
}
