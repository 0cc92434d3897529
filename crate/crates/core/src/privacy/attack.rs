//! Attribute inference: reconstruct a node's hidden features from its
//! released embedding, given the model and the features of a background set.
//!
//! The attacker solves `argmin_x' ‖h^(L)(x'; B ∪ {v}) − h_obs‖²` by plain
//! gradient descent, using the model's input-feature gradients.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use super::PrivacyError;
use crate::graph::{build_graph, Adjacency, ClientId, EdgeRecord, NodeRecord, PartitionedGraph};
use crate::linalg::sq_dist;
use crate::model::{backward_from_embeddings, forward_embeddings, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub iterations: usize,
    pub step: f64,
    /// Stop once the objective falls to this value.
    pub tolerance: f64,
    /// Starting point; zeros when `None`.
    pub init: Option<Vec<f64>>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { iterations: 500, step: 0.1, tolerance: 1e-20, init: None }
    }
}

/// What the attacker holds besides the parameters: the background node set
/// (dense indices, features known) and the target's observed embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackKnowledge {
    pub background: BTreeSet<usize>,
    pub observed: Vec<f64>,
}

impl AttackKnowledge {
    /// Observe the target's exact final-layer embedding on the subgraph
    /// induced by `background ∪ {target}`.
    pub fn observe(
        params: &ModelParams,
        graph: &PartitionedGraph,
        target: usize,
        background: BTreeSet<usize>,
    ) -> Result<Self, PrivacyError> {
        let (sub, t) = attack_subgraph(graph, target, &background)?;
        let trace = forward_embeddings(params, &sub, Adjacency::Full, &[t], None).map_err(attack_err)?;
        let observed = trace.embedding(t).expect("target computed").to_vec();
        Ok(AttackKnowledge { background, observed })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Best iterate found.
    pub reconstructed: Vec<f64>,
    /// Mean squared error of `reconstructed` against the true features.
    pub mse: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn attack_err(e: impl std::fmt::Display) -> PrivacyError {
    PrivacyError::Attack(e.to_string())
}

/// Single-client graph on `nodes` with every edge of `graph` between them.
/// Returns the graph and the original index of each new node.
pub fn induced_subgraph(graph: &PartitionedGraph, nodes: &BTreeSet<usize>) -> Result<(PartitionedGraph, Vec<usize>), PrivacyError> {
    let order: Vec<usize> = nodes.iter().copied().collect();
    let records: Vec<NodeRecord> = order
        .iter()
        .map(|&v| {
            let n = graph.node(v);
            NodeRecord { id: n.id, host: ClientId(0), features: n.features.clone(), label: n.label }
        })
        .collect();
    let edges: Vec<EdgeRecord> = graph
        .edges()
        .iter()
        .filter(|e| nodes.contains(&e.src) && nodes.contains(&e.dst))
        .map(|e| EdgeRecord {
            id: e.id,
            src: graph.node(e.src).id,
            dst: graph.node(e.dst).id,
            features: e.features.clone(),
            label: e.label,
        })
        .collect();
    let sub = build_graph(records, edges, 1).map_err(attack_err)?;
    Ok((sub, order))
}

fn attack_subgraph(graph: &PartitionedGraph, target: usize, background: &BTreeSet<usize>) -> Result<(PartitionedGraph, usize), PrivacyError> {
    let mut nodes = background.clone();
    nodes.insert(target);
    let (sub, order) = induced_subgraph(graph, &nodes)?;
    let t = order.iter().position(|&v| v == target).expect("target included");
    Ok((sub, t))
}

/// Background set drawn like a training neighborhood: up to `fanouts[0]`
/// neighbors of `target`, then up to `fanouts[1]` neighbors of each of those,
/// and so on. The target itself is excluded.
pub fn sample_background<R: Rng + ?Sized>(graph: &PartitionedGraph, target: usize, fanouts: &[usize], rng: &mut R) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut frontier = vec![target];
    for &fanout in fanouts {
        let mut next = Vec::new();
        for &v in &frontier {
            let nbrs = graph.neighbors(v);
            let picks: Vec<usize> = if nbrs.len() <= fanout {
                nbrs.to_vec()
            } else {
                let mut idx = index::sample(rng, nbrs.len(), fanout).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| nbrs[i]).collect()
            };
            for u in picks {
                if u != target && out.insert(u) {
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    out
}

pub fn aia_attack(
    params: &ModelParams,
    graph: &PartitionedGraph,
    target: usize,
    knowledge: &AttackKnowledge,
    config: &AttackConfig,
) -> Result<AttackResult, PrivacyError> {
    if !(config.step > 0.0) {
        return Err(PrivacyError::InvalidParameter { name: "step", value: config.step });
    }
    let (sub, t) = attack_subgraph(graph, target, &knowledge.background)?;
    let dim = graph.feature_dim();
    let mut x = config.init.clone().unwrap_or_else(|| vec![0.0; dim]);
    if x.len() != dim {
        return Err(attack_err(format!("initial point has dimension {}, features have {dim}", x.len())));
    }
    if knowledge.observed.len() != params.config.embedding_dim() {
        return Err(attack_err("observed embedding has the wrong dimension"));
    }
    let mut best = (f64::INFINITY, x.clone());
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let trace = forward_embeddings(params, &sub, Adjacency::Full, &[t], Some((t, &x))).map_err(attack_err)?;
        let h = trace.embedding(t).expect("target computed");
        let objective = sq_dist(h, &knowledge.observed);
        if objective < best.0 {
            best = (objective, x.clone());
        }
        if objective <= config.tolerance {
            converged = true;
            break;
        }
        if iterations == config.iterations {
            break;
        }
        let upstream: Vec<f64> = h.iter().zip(&knowledge.observed).map(|(a, b)| 2.0 * (a - b)).collect();
        let grads = backward_from_embeddings(&trace, params, &[(t, upstream)], Some(t));
        let (_, g) = grads.input.expect("input gradient requested");
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= config.step * gi;
        }
        iterations += 1;
    }
    let (objective, reconstructed) = best;
    let mse = sq_dist(&reconstructed, graph.features(target)) / dim.max(1) as f64;
    Ok(AttackResult { reconstructed, mse, objective, iterations, converged })
}
