//! Moving-average estimators for node embeddings and gradients.
//!
//! Embedding estimators are updated only when a node is sampled; entries that
//! are not touched keep their previous values bit for bit.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{Adjacency, PartitionedGraph};
use crate::linalg::sq_dist;
use crate::model::{forward_embeddings, Activation, ModelError, ModelParams, ParamSet};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("{name} must lie in (0, 1], got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("node {0} is not tracked by this estimator")]
    UnknownNode(usize),
    #[error("layer {0} out of range")]
    UnknownLayer(usize),
    #[error("message for layer {layer} has length {found}, expected {expected}")]
    MessageDim { layer: usize, expected: usize, found: usize },
    #[error("gradient shape mismatch at {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn check_rate(name: &'static str, value: f64) -> Result<(), EstimatorError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(EstimatorError::InvalidRate { name, value })
    }
}

/// When an entry was last written: `(round, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Stamp {
    pub round: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerState {
    dim: usize,
    pre: Vec<f64>,
    act: Vec<f64>,
    touched: Vec<Option<Stamp>>,
}

/// Per-client estimates `H̃^(l)(v)` and `H^(l)(v) = φ(H̃^(l)(v))` for every
/// hosted node and layer `1..=L`.
///
/// Cold entries hold `H̃ = 0`. The first touch of a cold entry overwrites it
/// (mixing rate 1) whatever the configured rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    activation: Activation,
    slots: HashMap<usize, usize>,
    nodes: Vec<usize>,
    layers: Vec<LayerState>,
}

impl EmbeddingState {
    pub fn new(nodes: &[usize], dims: &[usize], activation: Activation) -> Self {
        let slots = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let cold = activation.apply(0.0);
        let layers = dims
            .iter()
            .map(|&dim| LayerState {
                dim,
                pre: vec![0.0; dim * nodes.len()],
                act: vec![cold; dim * nodes.len()],
                touched: vec![None; nodes.len()],
            })
            .collect();
        EmbeddingState { activation, slots, nodes: nodes.to_vec(), layers }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn locate(&self, v: usize, layer: usize) -> Result<(usize, &LayerState), EstimatorError> {
        let slot = *self.slots.get(&v).ok_or(EstimatorError::UnknownNode(v))?;
        let state = layer.checked_sub(1).and_then(|i| self.layers.get(i)).ok_or(EstimatorError::UnknownLayer(layer))?;
        Ok((slot, state))
    }

    /// `H̃ ← (1-γ)·H̃ + γ·m`, `H ← φ(H̃)`; a cold entry is overwritten with `m`.
    pub fn update(&mut self, v: usize, layer: usize, message: &[f64], gamma: f64, stamp: Stamp) -> Result<(), EstimatorError> {
        check_rate("gamma", gamma)?;
        let (slot, state) = self.locate(v, layer)?;
        if message.len() != state.dim {
            return Err(EstimatorError::MessageDim { layer, expected: state.dim, found: message.len() });
        }
        let act_fn = self.activation;
        let state = &mut self.layers[layer - 1];
        let dim = state.dim;
        let cold = state.touched[slot].is_none();
        let pre = &mut state.pre[slot * dim..(slot + 1) * dim];
        if cold {
            pre.copy_from_slice(message);
        } else {
            for (p, &m) in pre.iter_mut().zip(message) {
                *p = (1.0 - gamma) * *p + gamma * m;
            }
        }
        for (a, &p) in state.act[slot * dim..(slot + 1) * dim].iter_mut().zip(pre.iter()) {
            *a = act_fn.apply(p);
        }
        state.touched[slot] = Some(stamp);
        Ok(())
    }

    pub fn pre(&self, v: usize, layer: usize) -> Result<&[f64], EstimatorError> {
        let (slot, state) = self.locate(v, layer)?;
        Ok(&state.pre[slot * state.dim..(slot + 1) * state.dim])
    }

    pub fn act(&self, v: usize, layer: usize) -> Result<&[f64], EstimatorError> {
        let (slot, state) = self.locate(v, layer)?;
        Ok(&state.act[slot * state.dim..(slot + 1) * state.dim])
    }

    pub fn is_cold(&self, v: usize, layer: usize) -> Result<bool, EstimatorError> {
        self.last_touched(v, layer).map(|s| s.is_none())
    }

    pub fn last_touched(&self, v: usize, layer: usize) -> Result<Option<Stamp>, EstimatorError> {
        let (slot, state) = self.locate(v, layer)?;
        Ok(state.touched[slot])
    }
}

/// Gradient estimator `G ← (1-β)·G + β·ĝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMA {
    pub value: ParamSet,
    pub beta: f64,
}

impl GradientMA {
    pub fn new(value: ParamSet, beta: f64) -> Result<Self, EstimatorError> {
        check_rate("beta", beta)?;
        Ok(GradientMA { value, beta })
    }

    pub fn update(&mut self, grad: &ParamSet) -> Result<(), EstimatorError> {
        if let Some(name) = self.value.shape_mismatch(grad) {
            return Err(EstimatorError::Shape(name));
        }
        let beta = self.beta;
        for (g, s) in self.value.tensors_mut().into_iter().zip(grad.tensors()) {
            for (gi, &si) in g.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *gi = (1.0 - beta) * *gi + beta * si;
            }
        }
        Ok(())
    }
}

/// Per-layer mean of `‖H^(l)(v) − h^(l)(v)‖²` over the tracked nodes, with
/// `h` computed exactly on same-host neighborhoods.
pub fn tracking_error_probe(
    state: &EmbeddingState,
    params: &ModelParams,
    graph: &PartitionedGraph,
) -> Result<Vec<f64>, EstimatorError> {
    let nodes = state.nodes();
    if nodes.is_empty() {
        return Ok(vec![0.0; state.num_layers()]);
    }
    let trace = forward_embeddings(params, graph, Adjacency::IntraClient, nodes, None)?;
    let mut out = Vec::with_capacity(state.num_layers());
    for l in 1..=state.num_layers() {
        let layer = &trace.layers[l];
        let mut total = 0.0;
        for &v in nodes {
            let exact = &layer.act[layer.position(v).expect("exact pass covers tracked nodes")];
            total += sq_dist(state.act(v, l)?, exact);
        }
        out.push(total / nodes.len() as f64);
    }
    Ok(out)
}
