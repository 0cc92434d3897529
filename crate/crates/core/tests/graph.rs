//! Partitioned graph, sampling and CSV round trips.

use std::collections::BTreeSet;

use fedgnn::graph::{
    boundary_nodes, build_graph, load_graph, read_nodes_csv, sample_minibatch, write_graph, ClientId, EdgeId,
    EdgeRecord, GraphError, NodeId, NodeRecord, PartitionedGraph, SamplingSpec, Target,
};
use fedgnn::rng::{stream, Purpose};
use proptest::prelude::*;
use rand::Rng;

fn random_graph(nodes: usize, edges: usize, clients: usize, seed: u64) -> PartitionedGraph {
    let mut r = stream(seed, Purpose::Generate, 0, 0, 0);
    let recs = (0..nodes)
        .map(|i| NodeRecord {
            id: NodeId(100 + i as u64),
            host: ClientId(r.random_range(0..clients)),
            features: vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)],
            label: Some(r.random_range(0..2)),
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut es = Vec::new();
    while es.len() < edges {
        let (a, b) = (r.random_range(0..nodes), r.random_range(0..nodes));
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        es.push(EdgeRecord {
            id: EdgeId(es.len() as u64),
            src: NodeId(100 + a as u64),
            dst: NodeId(100 + b as u64),
            features: vec![0.5],
            label: Some(r.random_range(0..2)),
        });
    }
    build_graph(recs, es, clients).unwrap()
}

#[test]
fn cross_edges_are_replicated_on_both_clients() {
    let g = random_graph(50, 120, 4, 1);
    let (mut intra, mut cross) = (0, 0);
    for e in g.edges() {
        if g.host(e.src) == g.host(e.dst) {
            intra += 1;
        } else {
            cross += 1;
        }
    }
    let stored: usize = (0..4).map(|c| g.view(c).edges.len()).sum();
    assert!(cross > 0);
    assert_eq!(stored, intra + 2 * cross);
    for e in 0..g.num_edges() {
        let edge = g.edge(e);
        let holders: Vec<usize> = (0..4).filter(|&c| g.view(c).edges.contains(&e)).collect();
        let expected: BTreeSet<usize> = [g.host(edge.src), g.host(edge.dst)].into();
        assert_eq!(holders.into_iter().collect::<BTreeSet<_>>(), expected);
    }
}

#[test]
fn boundary_nodes_have_a_remote_neighbor() {
    let g = random_graph(50, 120, 4, 2);
    for c in 0..4 {
        let brute: BTreeSet<NodeId> = g.view(c)
            .nodes
            .iter()
            .filter(|&&v| g.neighbors(v).iter().any(|&u| g.host(u) != c))
            .map(|&v| g.node(v).id)
            .collect();
        assert_eq!(boundary_nodes(&g, ClientId(c)), brute);
    }
}

#[test]
fn neighbor_clients_exclude_host() {
    let g = random_graph(30, 60, 3, 3);
    for v in 0..g.num_nodes() {
        let expected: BTreeSet<usize> = g.neighbors(v).iter().map(|&u| g.host(u)).filter(|&c| c != g.host(v)).collect();
        assert_eq!(g.neighbor_clients(v), expected);
    }
}

#[test]
fn sampling_is_deterministic_and_stays_on_client() {
    let g = random_graph(60, 150, 3, 4);
    let pool: Vec<Target> = g.view(1).nodes.iter().map(|&v| Target::Node(v)).collect();
    let spec = SamplingSpec { seed_count: 5, fanouts: vec![3, 2], layers: 2, include_remote: false };
    let a = sample_minibatch(&g, 1, &pool, &spec, &mut stream(9, Purpose::Sampling, 1, 0, 0));
    let b = sample_minibatch(&g, 1, &pool, &spec, &mut stream(9, Purpose::Sampling, 1, 0, 0));
    assert_eq!(a, b);
    assert_eq!(a.seeds.len(), 5);
    for layer in &a.layers {
        for s in layer {
            assert!(s.remote.is_empty());
            assert!(s.neighbors.iter().all(|&u| g.host(u) == 1));
        }
    }
    assert!(a.layers[1].iter().all(|s| s.neighbors.len() <= 3));
    assert!(a.layers[0].iter().all(|s| s.neighbors.len() <= 2));
}

#[test]
fn repeated_sampling_covers_the_pool() {
    let g = random_graph(40, 80, 2, 5);
    let pool: Vec<Target> = g.view(0).nodes.iter().map(|&v| Target::Node(v)).collect();
    let spec = SamplingSpec { seed_count: 4, fanouts: vec![2], layers: 1, include_remote: false };
    let mut seen = BTreeSet::new();
    for step in 0..200 {
        let mb = sample_minibatch(&g, 0, &pool, &spec, &mut stream(0, Purpose::Sampling, 0, 0, step));
        seen.extend(mb.seeds);
    }
    assert_eq!(seen.len(), pool.len());
}

#[test]
fn csv_round_trip_preserves_graph() {
    let g = random_graph(25, 40, 3, 6);
    let dir = tempfile::tempdir().unwrap();
    let (n, e) = (dir.path().join("nodes.csv"), dir.path().join("edges.csv"));
    write_graph(&g, &n, &e).unwrap();
    let back = load_graph(&n, &e, Some(3)).unwrap();
    assert_eq!(back.to_records(), g.to_records());
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let n = dir.path().join("nodes.csv");
    std::fs::write(&n, "node_id,client_id,label,f0\n1,0,1,0.5\n2,0,x,0.1\n").unwrap();
    match read_nodes_csv(&n) {
        Err(GraphError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    std::fs::write(&n, "id,client,label\n").unwrap();
    assert!(matches!(read_nodes_csv(&n), Err(GraphError::Parse { line: 1, .. })));
}

#[test]
fn dangling_endpoint_is_rejected() {
    let nodes = vec![NodeRecord { id: NodeId(0), host: ClientId(0), features: vec![], label: None }];
    let edges = vec![EdgeRecord { id: EdgeId(0), src: NodeId(0), dst: NodeId(7), features: vec![], label: None }];
    assert_eq!(build_graph(nodes, edges, 1).unwrap_err(), GraphError::DanglingEndpoint(EdgeId(0), NodeId(7)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_node_has_exactly_one_host(seed in 0u64..1000, clients in 1usize..6) {
        let g = random_graph(30, 50, clients, seed);
        let mut all: Vec<usize> = (0..clients).flat_map(|c| g.view(c).nodes.clone()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn rehosting_preserves_edges(seed in 0u64..1000, clients in 1usize..5) {
        let g = random_graph(20, 30, 2, seed);
        let hosts: Vec<usize> = (0..20).map(|v| (v * 7 + seed as usize) % clients).collect();
        let h = g.with_hosts(&hosts, clients).unwrap();
        prop_assert_eq!(h.num_edges(), g.num_edges());
        for (v, &c) in hosts.iter().enumerate() {
            prop_assert_eq!(h.host(v), c);
        }
        let stored: usize = (0..clients).map(|c| h.view(c).edges.len()).sum();
        let cross = (0..h.num_edges()).filter(|&e| h.is_cross_client(e)).count();
        prop_assert_eq!(stored, h.num_edges() + cross);
    }
}
