//! Forward passes producing a [`ForwardTrace`] that [`super::backward`] consumes.
//!
//! A trace stores, per layer, which nodes were computed, the coefficient list
//! each aggregation used, the aggregated message, the pre-activation and the
//! activation. Exact (full-neighborhood) and stochastic (sampled, moving
//! average) passes produce the same structure.

use std::collections::{BTreeSet, HashMap};

use crate::graph::{Adjacency, PartitionedGraph, Target};

use super::{Activation, Arch, ModelError, ModelParams, TaskKind};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrace {
    pub nodes: Vec<usize>,
    /// Entry is a constant (a remote embedding); no gradient flows through it.
    pub fixed: Vec<bool>,
    /// Per entry: `(position in previous layer, coefficient)`, ascending by node.
    pub inputs: Vec<Vec<(usize, f64)>>,
    pub messages: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
    index: HashMap<usize, usize>,
}

impl LayerTrace {
    pub fn position(&self, node: usize) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, node: usize, fixed: bool, inputs: Vec<(usize, f64)>, message: Vec<f64>, pre: Vec<f64>, act: Vec<f64>) -> usize {
        let pos = self.nodes.len();
        self.index.insert(node, pos);
        self.nodes.push(node);
        self.fixed.push(fixed);
        self.inputs.push(inputs);
        self.messages.push(message);
        self.pre.push(pre);
        self.act.push(act);
        pos
    }
}

/// Value of an edge endpoint or node fed into the task head.
#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    /// Position in the final layer; gradients flow through it.
    Local(usize),
    /// Stop-gradient constant. `cold` marks a value that was never released.
    Fixed { value: Vec<f64>, cold: bool },
}

/// A target together with its loss weight.
///
/// `chain_scale` multiplies the gradient passed into local endpoint
/// embeddings. For a cross-client edge whose remote endpoint is held fixed
/// it is `1 / weight_share` so each endpoint's chain is counted once in total
/// across the two incident clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTarget {
    pub target: Target,
    pub weight: f64,
    pub chain_scale: f64,
}

impl WeightedTarget {
    pub fn unit(target: Target) -> Self {
        WeightedTarget { target, weight: 1.0, chain_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrace {
    pub target: Target,
    pub label: usize,
    pub weight: f64,
    pub chain_scale: f64,
    pub endpoints: Vec<Endpoint>,
    /// Input to the head: mean endpoint embedding (edge) or h^(L)(v) (node).
    pub rep_in: Vec<f64>,
    /// Edge head pre-activation; `None` for node targets.
    pub rep_pre: Option<Vec<f64>>,
    pub rep: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub loss: f64,
}

impl TargetTrace {
    pub fn prediction(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn used_cold_value(&self) -> bool {
        self.endpoints.iter().any(|e| matches!(e, Endpoint::Fixed { cold: true, .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub activation: Activation,
    /// `layers[0]` holds input features; `layers[l]` the layer-l outputs.
    pub layers: Vec<LayerTrace>,
    pub targets: Vec<TargetTrace>,
    /// Σ weight · cross-entropy.
    pub loss: f64,
}

impl ForwardTrace {
    /// Final-layer embedding of `node`, when it was computed.
    pub fn embedding(&self, node: usize) -> Option<&[f64]> {
        let last = self.layers.last()?;
        last.position(node).map(|p| last.act[p].as_slice())
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.targets.iter().map(TargetTrace::prediction).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Aggregation coefficients over `{v} ∪ sampled`, ascending by node.
///
/// `degree_v` is the size of v's full neighbor list. With a full neighborhood
/// (`sampled.len() == degree_v`) the coefficients are the exact ones:
/// SAGE-mean `1/(deg+1)`, GCN `1/sqrt(d̃_v d̃_u)` with `d̃ = deg+1`, GIN `1+ε`
/// on self and `1` on neighbors. A partial sample rescales the neighbor terms
/// of GCN and GIN by `deg / |sample|`.
pub fn aggregation_coefficients(
    arch: Arch,
    gin_eps: f64,
    v: usize,
    sampled: &[usize],
    degree_v: usize,
    degree_of: impl Fn(usize) -> usize,
) -> Vec<(usize, f64)> {
    let k = sampled.len();
    let mut out = Vec::with_capacity(k + 1);
    let (self_coef, neighbor_coef): (f64, Box<dyn Fn(usize) -> f64>) = match arch {
        Arch::SageMean => {
            let c = 1.0 / (k + 1) as f64;
            (c, Box::new(move |_| c))
        }
        Arch::Gcn => {
            let dv = (degree_v + 1) as f64;
            let scale = if k == 0 { 0.0 } else { degree_v as f64 / k as f64 };
            (1.0 / dv, Box::new(move |u| scale / (dv * (degree_of(u) + 1) as f64).sqrt()))
        }
        Arch::Gin => {
            let scale = if k == 0 { 0.0 } else { degree_v as f64 / k as f64 };
            (1.0 + gin_eps, Box::new(move |_| scale))
        }
    };
    let mut self_done = false;
    for &u in sampled {
        if !self_done && v < u {
            out.push((v, self_coef));
            self_done = true;
        }
        out.push((u, neighbor_coef(u)));
    }
    if !self_done {
        out.push((v, self_coef));
    }
    out
}

/// `Σ coef · act[pos]`, accumulated in coefficient order.
pub(crate) fn aggregate(inputs: &[(usize, f64)], prev: &LayerTrace, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(pos, c) in inputs {
        for (o, x) in out.iter_mut().zip(&prev.act[pos]) {
            *o += c * x;
        }
    }
    out
}

/// Exact embeddings for `final_nodes` and every node they depend on.
fn exact_layers(
    params: &ModelParams,
    graph: &PartitionedGraph,
    adjacency: Adjacency,
    final_nodes: &BTreeSet<usize>,
    feature_override: Option<(usize, &[f64])>,
) -> Vec<LayerTrace> {
    let cfg = &params.config;
    let depth = cfg.num_layers();
    let mut sets = vec![BTreeSet::new(); depth + 1];
    sets[depth] = final_nodes.clone();
    for l in (1..=depth).rev() {
        let mut below = BTreeSet::new();
        for &v in &sets[l] {
            below.insert(v);
            below.extend(graph.mp_neighbors(v, adjacency).iter().copied());
        }
        sets[l - 1] = below;
    }

    let mut layers = Vec::with_capacity(depth + 1);
    let mut input = LayerTrace::default();
    for &v in &sets[0] {
        let x = match feature_override {
            Some((node, f)) if node == v => f.to_vec(),
            _ => graph.features(v).to_vec(),
        };
        input.push(v, false, Vec::new(), Vec::new(), Vec::new(), x);
    }
    layers.push(input);

    for l in 1..=depth {
        let w = &params.weights.layers[l - 1];
        let prev = &layers[l - 1];
        let mut layer = LayerTrace::default();
        for &v in &sets[l] {
            let nbrs = graph.mp_neighbors(v, adjacency);
            let coefs = aggregation_coefficients(cfg.arch, cfg.gin_eps, v, nbrs, nbrs.len(), |u| {
                graph.mp_neighbors(u, adjacency).len()
            });
            let inputs: Vec<(usize, f64)> =
                coefs.into_iter().map(|(u, c)| (prev.position(u).expect("lower layer covers inputs"), c)).collect();
            let message = aggregate(&inputs, prev, w.cols());
            let pre = w.matvec(&message);
            let act = cfg.activation.map(&pre);
            layer.push(v, false, inputs, message, pre, act);
        }
        layers.push(layer);
    }
    layers
}

fn target_label(graph: &PartitionedGraph, target: Target, classes: usize) -> Result<usize, ModelError> {
    let (label, name) = match target {
        Target::Node(v) => (graph.node(v).label, format!("node {}", graph.node(v).id.0)),
        Target::Edge(e) => (graph.edge(e).label, format!("edge {}", graph.edge(e).id.0)),
    };
    let label = label.ok_or(ModelError::MissingLabel(name))?;
    if label >= classes {
        return Err(ModelError::LabelOutOfRange { label, classes });
    }
    Ok(label)
}

/// Apply the task head to one target whose endpoint values are resolved.
pub(crate) fn head_forward(
    params: &ModelParams,
    graph: &PartitionedGraph,
    wt: &WeightedTarget,
    endpoints: Vec<Endpoint>,
    final_layer: &LayerTrace,
) -> Result<TargetTrace, ModelError> {
    let cfg = &params.config;
    let label = target_label(graph, wt.target, cfg.num_classes)?;
    let value = |ep: &Endpoint| -> Vec<f64> {
        match ep {
            Endpoint::Local(pos) => final_layer.act[*pos].clone(),
            Endpoint::Fixed { value, .. } => value.clone(),
        }
    };
    let (rep_in, rep_pre, rep) = match wt.target {
        Target::Node(_) => {
            let h = value(&endpoints[0]);
            (h.clone(), None, h)
        }
        Target::Edge(_) => {
            let a = value(&endpoints[0]);
            let b = value(&endpoints[1]);
            let rep_in: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let we = params.weights.edge_head.as_ref().ok_or(ModelError::MissingEdgeHead)?;
            let pre = we.matvec(&rep_in);
            let rep = cfg.activation.map(&pre);
            (rep_in, Some(pre), rep)
        }
    };
    let logits = params.weights.task_head.matvec(&rep);
    let probs = softmax(&logits);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    Ok(TargetTrace {
        target: wt.target,
        label,
        weight: wt.weight,
        chain_scale: wt.chain_scale,
        endpoints,
        rep_in,
        rep_pre,
        rep,
        logits,
        probs,
        loss,
    })
}

pub(crate) fn check_task(params: &ModelParams, target: Target) -> Result<(), ModelError> {
    match (params.config.task, target) {
        (TaskKind::Edge, Target::Edge(_)) | (TaskKind::Node, Target::Node(_)) => Ok(()),
        _ => Err(ModelError::Config(format!("target {target:?} does not match task {:?}", params.config.task))),
    }
}

/// Exact forward pass over full neighborhoods.
///
/// Nodes present in `fixed` are treated as stop-gradient constants when they
/// appear as edge endpoints; their embeddings are not recomputed.
pub fn forward_exact(
    params: &ModelParams,
    graph: &PartitionedGraph,
    adjacency: Adjacency,
    targets: &[WeightedTarget],
    fixed: &HashMap<usize, Vec<f64>>,
) -> Result<ForwardTrace, ModelError> {
    params.validate()?;
    if graph.feature_dim() != params.config.input_dim {
        return Err(ModelError::Dimension {
            tensor: "layer1".into(),
            expected: (params.config.hidden.first().copied().unwrap_or(0), graph.feature_dim()),
            found: params.weights.layers.first().map_or((0, 0), |m| m.shape()),
        });
    }
    let mut final_nodes = BTreeSet::new();
    for wt in targets {
        check_task(params, wt.target)?;
        match wt.target {
            Target::Node(v) => {
                final_nodes.insert(v);
            }
            Target::Edge(e) => {
                let edge = graph.edge(e);
                for v in [edge.src, edge.dst] {
                    if !fixed.contains_key(&v) {
                        final_nodes.insert(v);
                    }
                }
            }
        }
    }
    let layers = exact_layers(params, graph, adjacency, &final_nodes, None);
    let last = layers.last().expect("at least the input layer");
    let mut traces = Vec::with_capacity(targets.len());
    for wt in targets {
        let endpoints = match wt.target {
            Target::Node(v) => vec![Endpoint::Local(last.position(v).expect("computed"))],
            Target::Edge(e) => {
                let edge = graph.edge(e);
                [edge.src, edge.dst]
                    .into_iter()
                    .map(|v| match fixed.get(&v) {
                        Some(value) => Endpoint::Fixed { value: value.clone(), cold: false },
                        None => Endpoint::Local(last.position(v).expect("computed")),
                    })
                    .collect()
            }
        };
        traces.push(head_forward(params, graph, wt, endpoints, last)?);
    }
    let loss = traces.iter().map(|t| t.weight * t.loss).sum();
    Ok(ForwardTrace { activation: params.config.activation, layers, targets: traces, loss })
}

/// Exact embeddings of `nodes` with no task head. `feature_override`
/// substitutes one node's input features.
pub fn forward_embeddings(
    params: &ModelParams,
    graph: &PartitionedGraph,
    adjacency: Adjacency,
    nodes: &[usize],
    feature_override: Option<(usize, &[f64])>,
) -> Result<ForwardTrace, ModelError> {
    params.validate()?;
    let final_nodes: BTreeSet<usize> = nodes.iter().copied().collect();
    let layers = exact_layers(params, graph, adjacency, &final_nodes, feature_override);
    Ok(ForwardTrace { activation: params.config.activation, layers, targets: Vec::new(), loss: 0.0 })
}
