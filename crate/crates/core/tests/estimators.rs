//! Moving-average embedding and gradient estimators.

use std::collections::HashMap;

use fedgnn::datagen::{generate, GenSpec, Generator};
use fedgnn::estimators::{tracking_error_probe, EmbeddingState, EstimatorError, GradientMA, Stamp};
use fedgnn::graph::{
    build_graph, sample_minibatch, Adjacency, ClientId, EdgeId, EdgeRecord, NodeId, NodeRecord, PartitionedGraph,
    SamplingSpec, Target,
};
use fedgnn::model::{
    backward, forward_embeddings, forward_exact, forward_stochastic, Activation, Arch, ModelConfig, ModelParams,
    ParamSet, TaskKind, WeightedTarget,
};
use fedgnn::rng::{stream, Purpose};
use proptest::prelude::*;
use rand::seq::index;

fn stamp(step: usize) -> Stamp {
    Stamp { round: 0, step }
}

fn sbm(nodes: usize, seed: u64) -> PartitionedGraph {
    let spec = GenSpec { generator: Generator::SbmNodes, nodes, clients: 1, p_in: 0.1, p_out: 0.01, seed, ..GenSpec::default() };
    generate(&spec).unwrap()
}

fn model(graph: &PartitionedGraph, task: TaskKind, hidden: Vec<usize>, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        arch: Arch::SageMean,
        activation: Activation::Tanh,
        gin_eps: 0.0,
        input_dim: graph.feature_dim(),
        hidden,
        num_classes: 3,
        task,
    };
    ModelParams::init(cfg, &mut stream(seed, Purpose::Init, 0, 0, 0))
}

#[test]
fn unit_rate_overwrites() {
    let mut s = EmbeddingState::new(&[4], &[2], Activation::Tanh);
    s.update(4, 1, &[0.3, 0.1], 0.5, stamp(0)).unwrap();
    s.update(4, 1, &[2.0, -2.0], 1.0, stamp(1)).unwrap();
    assert_eq!(s.pre(4, 1).unwrap(), &[2.0, -2.0]);
    assert_eq!(s.act(4, 1).unwrap(), &[2.0f64.tanh(), (-2.0f64).tanh()]);
}

#[test]
fn half_rate_from_a_zero_warm_value() {
    let mut s = EmbeddingState::new(&[0], &[2], Activation::Tanh);
    s.update(0, 1, &[0.0, 0.0], 0.5, stamp(0)).unwrap();
    s.update(0, 1, &[2.0, -2.0], 0.5, stamp(1)).unwrap();
    assert_eq!(s.pre(0, 1).unwrap(), &[1.0, -1.0]);
}

#[test]
fn first_touch_overwrites_cold_entry() {
    let mut s = EmbeddingState::new(&[0, 1], &[2], Activation::Tanh);
    assert!(s.is_cold(0, 1).unwrap());
    s.update(0, 1, &[2.0, -2.0], 0.1, stamp(3)).unwrap();
    assert_eq!(s.pre(0, 1).unwrap(), &[2.0, -2.0]);
    assert!(!s.is_cold(0, 1).unwrap());
    assert!(s.is_cold(1, 1).unwrap());
    assert_eq!(s.last_touched(0, 1).unwrap(), Some(stamp(3)));
}

#[test]
fn invalid_rates_and_shapes_are_rejected() {
    let mut s = EmbeddingState::new(&[0], &[2], Activation::Tanh);
    assert!(s.update(0, 1, &[1.0, 1.0], 0.0, stamp(0)).is_err());
    assert!(s.update(0, 1, &[1.0, 1.0], 1.5, stamp(0)).is_err());
    assert!(matches!(s.update(0, 1, &[1.0], 0.5, stamp(0)), Err(EstimatorError::MessageDim { .. })));
    assert!(matches!(s.update(9, 1, &[1.0, 1.0], 0.5, stamp(0)), Err(EstimatorError::UnknownNode(9))));
    let g = ParamSet { layers: vec![], edge_head: None, task_head: fedgnn::linalg::Matrix::zeros(2, 2) };
    let mut ma = GradientMA::new(g, 0.5).unwrap();
    let wrong = ParamSet { layers: vec![], edge_head: None, task_head: fedgnn::linalg::Matrix::zeros(3, 2) };
    assert!(matches!(ma.update(&wrong), Err(EstimatorError::Shape(_))));
}

#[test]
fn geometric_tracking_against_exact_messages() {
    let g = sbm(40, 1);
    let p = model(&g, TaskKind::Node, vec![4], 2);
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let exact = forward_embeddings(&p, &g, Adjacency::IntraClient, &nodes, None).unwrap();
    let layer = &exact.layers[1];
    let mut s = EmbeddingState::new(&nodes, &[4], Activation::Tanh);
    for &v in &nodes {
        let start: Vec<f64> = layer.pre[layer.position(v).unwrap()].iter().map(|x| x + 3.0).collect();
        s.update(v, 1, &start, 0.5, stamp(0)).unwrap();
    }
    let err = |s: &EmbeddingState| -> f64 {
        nodes
            .iter()
            .map(|&v| {
                let e = &layer.pre[layer.position(v).unwrap()];
                s.pre(v, 1).unwrap().iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let e0 = err(&s);
    for t in 1..=200 {
        for &v in &nodes {
            s.update(v, 1, &layer.pre[layer.position(v).unwrap()], 0.5, stamp(t)).unwrap();
        }
        if t == 3 {
            assert!((err(&s) / e0 - 0.125).abs() < 1e-12);
        }
    }
    // With O(1) targets the recursion bottoms out at the rounding floor.
    let norm: f64 = layer.pre.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    assert!(err(&s) <= 1e-15 * norm, "{}", err(&s));
}

#[test]
fn geometric_tracking_reaches_below_1e30_for_zero_target() {
    // Zero features make every exact message zero, so each touch halves the
    // error exactly in binary floating point.
    let nodes = (0..4).map(|i| NodeRecord { id: NodeId(i), host: ClientId(0), features: vec![0.0; 2], label: Some(0) }).collect();
    let edges = (0..3).map(|i| EdgeRecord { id: EdgeId(i), src: NodeId(i), dst: NodeId(i + 1), features: vec![], label: None }).collect();
    let g = build_graph(nodes, edges, 1).unwrap();
    let cfg = ModelConfig { arch: Arch::SageMean, activation: Activation::Tanh, gin_eps: 0.0, input_dim: 2, hidden: vec![3], num_classes: 2, task: TaskKind::Node };
    let p = ModelParams::init(cfg, &mut stream(0, Purpose::Init, 0, 0, 0));
    let exact = forward_embeddings(&p, &g, Adjacency::Full, &[0, 1, 2, 3], None).unwrap();
    let layer = &exact.layers[1];
    let mut s = EmbeddingState::new(&[0, 1, 2, 3], &[3], Activation::Tanh);
    for v in 0..4 {
        s.update(v, 1, &[1.5, -0.25, 2.0], 0.5, stamp(0)).unwrap();
    }
    for t in 1..=200 {
        for v in 0..4 {
            s.update(v, 1, &layer.pre[layer.position(v).unwrap()], 0.5, stamp(t)).unwrap();
        }
    }
    let err: f64 = (0..4).map(|v| s.pre(v, 1).unwrap().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    assert!(err < 1e-30, "{err}");
}

#[test]
fn cold_state_probe_equals_exact_embedding_energy() {
    let g = sbm(30, 3);
    let p = model(&g, TaskKind::Node, vec![4, 3], 4);
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let s = EmbeddingState::new(&nodes, &[4, 3], Activation::Tanh);
    let probe = tracking_error_probe(&s, &p, &g).unwrap();
    let exact = forward_embeddings(&p, &g, Adjacency::IntraClient, &nodes, None).unwrap();
    for l in 1..=2 {
        let energy: f64 = exact.layers[l].act.iter().map(|h| h.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / nodes.len() as f64;
        assert!((probe[l - 1] - energy).abs() <= 1e-12 * energy.max(1.0));
    }
}

#[test]
fn unsampled_entries_stay_bit_identical() {
    let g = sbm(60, 5);
    let p = model(&g, TaskKind::Node, vec![4, 4], 6);
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let pool: Vec<Target> = nodes.iter().map(|&v| Target::Node(v)).collect();
    let spec = SamplingSpec { seed_count: 3, fanouts: vec![2, 2], layers: 2, include_remote: false };
    let mut s = EmbeddingState::new(&nodes, &[4, 4], Activation::Tanh);
    for step in 0..20 {
        let before = s.clone();
        let mb = sample_minibatch(&g, 0, &pool, &spec, &mut stream(0, Purpose::Sampling, 0, 0, step as u64));
        let targets: Vec<WeightedTarget> = mb.seeds.iter().map(|&t| WeightedTarget::unit(t)).collect();
        forward_stochastic(&p, &g, Adjacency::IntraClient, &mb, &targets, &mut s, &HashMap::new(), 0.5, stamp(step)).unwrap();
        for l in 1..=2 {
            let touched: Vec<usize> = mb.layers[l - 1].iter().map(|n| n.node).collect();
            for &v in &nodes {
                if !touched.contains(&v) {
                    assert_eq!(s.pre(v, l).unwrap(), before.pre(v, l).unwrap());
                    assert_eq!(s.act(v, l).unwrap(), before.act(v, l).unwrap());
                }
            }
        }
    }
}

#[test]
fn zero_remote_embedding_halves_local_endpoint() {
    // Edge 0 joins node 0 (client 0) and node 1 (client 1).
    let nodes = (0..3)
        .map(|i| NodeRecord {
            id: NodeId(i),
            host: ClientId(if i == 1 { 1 } else { 0 }),
            features: vec![0.2 * i as f64 + 0.1, -0.4],
            label: None,
        })
        .collect();
    let edges = vec![
        EdgeRecord { id: EdgeId(0), src: NodeId(0), dst: NodeId(1), features: vec![], label: Some(1) },
        EdgeRecord { id: EdgeId(1), src: NodeId(0), dst: NodeId(2), features: vec![], label: Some(0) },
    ];
    let g = build_graph(nodes, edges, 2).unwrap();
    let cfg = ModelConfig { arch: Arch::SageMean, activation: Activation::Tanh, gin_eps: 0.0, input_dim: 2, hidden: vec![3], num_classes: 2, task: TaskKind::Edge };
    let p = ModelParams::init(cfg, &mut stream(1, Purpose::Init, 0, 0, 0));
    let spec = SamplingSpec { seed_count: usize::MAX, fanouts: vec![usize::MAX], layers: 1, include_remote: false };
    let mb = sample_minibatch(&g, 0, &[Target::Edge(0)], &spec, &mut stream(0, Purpose::Sampling, 0, 0, 0));
    let mut s = EmbeddingState::new(&g.view(0).nodes, &[3], Activation::Tanh);
    let remote: HashMap<usize, Vec<f64>> = [(1, vec![0.0; 3])].into();
    let targets = [WeightedTarget::unit(Target::Edge(0))];
    let trace = forward_stochastic(&p, &g, Adjacency::IntraClient, &mb, &targets, &mut s, &remote, 1.0, stamp(0)).unwrap();
    let hu = trace.embedding(0).unwrap();
    let rep_in = &trace.targets[0].rep_in;
    for (r, h) in rep_in.iter().zip(hu) {
        assert_eq!(*r, 0.5 * h);
    }
    assert!(!trace.targets[0].used_cold_value());
}

#[test]
fn gradient_average_formula() {
    let g = sbm(20, 7);
    let p = model(&g, TaskKind::Node, vec![3], 8);
    let g0 = p.weights.clone();
    let mut ghat = p.weights.clone();
    ghat.scale(-2.0);
    let mut ma = GradientMA::new(g0.clone(), 0.1).unwrap();
    ma.update(&ghat).unwrap();
    let mut expected = g0.clone();
    expected.scale(0.9);
    expected.axpy(0.1, &ghat);
    assert_eq!(ma.value, expected);
    let mut unit = GradientMA::new(g0, 1.0).unwrap();
    unit.update(&ghat).unwrap();
    assert_eq!(unit.value, ghat);
}

/// Mean squared distance between the estimator and the full gradient over
/// 1000 steps of i.i.d. minibatch gradients at fixed parameters.
fn estimator_mse(beta: f64, seed: u64) -> f64 {
    let g = sbm(60, seed);
    let p = model(&g, TaskKind::Node, vec![4], seed);
    let all: Vec<WeightedTarget> = (0..g.num_nodes()).map(|v| WeightedTarget::unit(Target::Node(v))).collect();
    let full = backward(&forward_exact(&p, &g, Adjacency::Full, &all, &HashMap::new()).unwrap(), &p).weights;
    let batch = 6;
    let scale = g.num_nodes() as f64 / batch as f64;
    let mut rng = stream(seed, Purpose::Sampling, 99, 0, 0);
    let mut ma: Option<GradientMA> = None;
    let mut total = 0.0;
    for _ in 0..1000 {
        let picks: Vec<WeightedTarget> = index::sample(&mut rng, g.num_nodes(), batch)
            .into_iter()
            .map(|v| WeightedTarget { target: Target::Node(v), weight: scale, chain_scale: 1.0 })
            .collect();
        let ghat = backward(&forward_exact(&p, &g, Adjacency::Full, &picks, &HashMap::new()).unwrap(), &p).weights;
        match ma.as_mut() {
            None => ma = Some(GradientMA::new(ghat, beta).unwrap()),
            Some(m) => m.update(&ghat).unwrap(),
        }
        let mut diff = ma.as_ref().unwrap().value.clone();
        diff.axpy(-1.0, &full);
        total += diff.squared_norm();
    }
    total / 1000.0
}

#[test]
fn gradient_averaging_reduces_estimator_error() {
    for seed in 0..10 {
        let (smooth, raw) = (estimator_mse(0.1, seed), estimator_mse(1.0, seed));
        assert!(smooth < raw, "seed {seed}: β=0.1 {smooth} vs β=1 {raw}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn activation_tracks_pre_activation(msgs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20), gamma in 0.01f64..=1.0) {
        let mut s = EmbeddingState::new(&[0], &[3], Activation::Tanh);
        for (t, m) in msgs.iter().enumerate() {
            s.update(0, 1, m, gamma, stamp(t)).unwrap();
            let pre = s.pre(0, 1).unwrap().to_vec();
            let act: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
            prop_assert_eq!(s.act(0, 1).unwrap(), act.as_slice());
        }
    }
}
