//! Sampled forward pass that reads and updates moving-average embeddings.

use std::collections::{BTreeSet, HashMap};

use crate::estimators::{EmbeddingState, EstimatorError, Stamp};
use crate::graph::{Adjacency, Minibatch, PartitionedGraph, Target};

use super::forward::{aggregate, aggregation_coefficients, check_task, head_forward};
use super::{Endpoint, ForwardTrace, LayerTrace, ModelError, ModelParams, WeightedTarget};

/// Source of final-layer embeddings for nodes hosted by other clients.
pub trait RemoteEmbeddings {
    fn get(&self, node: usize) -> Option<&[f64]>;
}

impl RemoteEmbeddings for HashMap<usize, Vec<f64>> {
    fn get(&self, node: usize) -> Option<&[f64]> {
        HashMap::get(self, &node).map(Vec::as_slice)
    }
}

/// No remote values: every lookup is cold.
pub struct NoRemote;

impl RemoteEmbeddings for NoRemote {
    fn get(&self, _node: usize) -> Option<&[f64]> {
        None
    }
}

fn remote_value(remote: &dyn RemoteEmbeddings, node: usize, dim: usize) -> (Vec<f64>, bool) {
    match remote.get(node) {
        Some(v) => (v.to_vec(), false),
        None => (vec![0.0; dim], true),
    }
}

/// Forward pass over a sampled minibatch.
///
/// Layers are processed bottom-up. Each computed node's aggregated message is
/// folded into `state` with rate `gamma`, and the resulting moving-average
/// values (`H̃` as pre-activation, `H` as activation) populate the trace, so
/// later layers aggregate moving averages. Cross-client edge endpoints and
/// sampled remote neighbors are fixed values read from `remote`; a missing
/// value is zero and flagged cold.
///
/// `targets` must align with `mb.seeds`. `adjacency` selects the degree used
/// by GCN/GIN coefficient rescaling.
#[allow(clippy::too_many_arguments)]
pub fn forward_stochastic(
    params: &ModelParams,
    graph: &PartitionedGraph,
    adjacency: Adjacency,
    mb: &Minibatch,
    targets: &[WeightedTarget],
    state: &mut EmbeddingState,
    remote: &dyn RemoteEmbeddings,
    gamma: f64,
    stamp: Stamp,
) -> Result<ForwardTrace, EstimatorError> {
    let cfg = &params.config;
    let depth = cfg.num_layers();
    if mb.layers.len() != depth {
        return Err(ModelError::Config(format!("minibatch has {} layers, model has {depth}", mb.layers.len())).into());
    }
    if targets.len() != mb.seeds.len() {
        return Err(ModelError::Config("targets do not align with minibatch seeds".into()).into());
    }
    let d_final = cfg.embedding_dim();

    let mut inputs = BTreeSet::new();
    for s in mb.layers.first().into_iter().flatten() {
        inputs.insert(s.node);
        inputs.extend(s.neighbors.iter().copied());
    }
    let mut layers = Vec::with_capacity(depth + 1);
    let mut input = LayerTrace::default();
    for v in inputs {
        input.push(v, false, Vec::new(), Vec::new(), Vec::new(), graph.features(v).to_vec());
    }
    layers.push(input);

    let degree = |u: usize| graph.mp_neighbors(u, adjacency).len();
    for l in 1..=depth {
        let w = &params.weights.layers[l - 1];
        let sampled = &mb.layers[l - 1];
        let prev = &mut layers[l - 1];
        for s in sampled {
            for &u in &s.remote {
                if prev.position(u).is_none() {
                    if w.cols() != d_final {
                        return Err(ModelError::Config(format!(
                            "remote inputs at layer {l} need width {d_final}, layer input is {}",
                            w.cols()
                        ))
                        .into());
                    }
                    let (value, _) = remote_value(remote, u, d_final);
                    prev.push(u, true, Vec::new(), Vec::new(), Vec::new(), value);
                }
            }
        }
        let prev = &layers[l - 1];
        let mut layer = LayerTrace::default();
        for s in sampled {
            let v = s.node;
            let mut nbrs: Vec<usize> = s.neighbors.iter().chain(&s.remote).copied().collect();
            nbrs.sort_unstable();
            let coefs = aggregation_coefficients(cfg.arch, cfg.gin_eps, v, &nbrs, degree(v), degree);
            let inputs: Vec<(usize, f64)> = coefs
                .into_iter()
                .map(|(u, c)| (prev.position(u).expect("sampled inputs are present one layer down"), c))
                .collect();
            let message = aggregate(&inputs, prev, w.cols());
            let m = w.matvec(&message);
            state.update(v, l, &m, gamma, stamp)?;
            let pre = state.pre(v, l)?.to_vec();
            let act = state.act(v, l)?.to_vec();
            layer.push(v, false, inputs, message, pre, act);
        }
        layers.push(layer);
    }

    let last = layers.last().expect("input layer");
    let mut traces = Vec::with_capacity(targets.len());
    for wt in targets {
        check_task(params, wt.target)?;
        let endpoints: Vec<Endpoint> = match wt.target {
            Target::Node(v) => vec![Endpoint::Local(last.position(v).expect("seed node computed"))],
            Target::Edge(e) => {
                let edge = graph.edge(e);
                [edge.src, edge.dst]
                    .into_iter()
                    .map(|v| {
                        if graph.host(v) == mb.client {
                            Endpoint::Local(last.position(v).expect("hosted endpoint computed"))
                        } else {
                            let (value, cold) = remote_value(remote, v, d_final);
                            Endpoint::Fixed { value, cold }
                        }
                    })
                    .collect()
            }
        };
        traces.push(head_forward(params, graph, wt, endpoints, last)?);
    }
    let loss = traces.iter().map(|t| t.weight * t.loss).sum();
    Ok(ForwardTrace { activation: cfg.activation, layers, targets: traces, loss })
}
