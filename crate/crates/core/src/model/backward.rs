//! Reverse-mode gradients over a [`ForwardTrace`].
//!
//! Fixed endpoints and fixed layer entries are constants: the pass never
//! differentiates through them.

use super::forward::Endpoint;
use super::{ForwardTrace, ModelParams, ParamSet};
use crate::linalg::axpy;

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: ParamSet,
    /// Gradient with respect to one node's input features, when requested.
    pub input: Option<(usize, Vec<f64>)>,
}

/// Gradients of `trace.loss` with respect to every parameter.
pub fn backward(trace: &ForwardTrace, params: &ModelParams) -> Gradients {
    backward_impl(trace, params, Vec::new(), None)
}

/// Backpropagate externally supplied gradients on final-layer embeddings
/// (`(node, dL/dh)` pairs) together with the trace's own task loss.
pub fn backward_from_embeddings(
    trace: &ForwardTrace,
    params: &ModelParams,
    upstream: &[(usize, Vec<f64>)],
    input_node: Option<usize>,
) -> Gradients {
    let last = trace.layers.last().expect("input layer");
    let seeds = upstream
        .iter()
        .filter_map(|(node, g)| last.position(*node).map(|p| (p, g.clone())))
        .collect();
    backward_impl(trace, params, seeds, input_node)
}

fn backward_impl(
    trace: &ForwardTrace,
    params: &ModelParams,
    seeds: Vec<(usize, Vec<f64>)>,
    input_node: Option<usize>,
) -> Gradients {
    let act = trace.activation;
    let mut grads = params.weights.zeros_like();
    let depth = trace.layers.len() - 1;
    let mut d_act: Vec<Vec<Vec<f64>>> = trace
        .layers
        .iter()
        .map(|layer| layer.act.iter().map(|a| vec![0.0; a.len()]).collect())
        .collect();
    for (pos, g) in seeds {
        axpy(&mut d_act[depth][pos], 1.0, &g);
    }

    for t in &trace.targets {
        if t.weight == 0.0 {
            continue;
        }
        let mut d_logits = t.probs.clone();
        d_logits[t.label] -= 1.0;
        d_logits.iter_mut().for_each(|v| *v *= t.weight);
        grads.task_head.add_outer(1.0, &d_logits, &t.rep);
        let d_rep = params.weights.task_head.matvec_t(&d_logits);
        match &t.rep_pre {
            Some(pre) => {
                let d_pre: Vec<f64> = d_rep.iter().zip(pre).map(|(g, &z)| g * act.derivative(z)).collect();
                let we = params.weights.edge_head.as_ref().expect("edge head present for edge targets");
                grads.edge_head.as_mut().expect("edge head gradient").add_outer(1.0, &d_pre, &t.rep_in);
                let d_in = we.matvec_t(&d_pre);
                for ep in &t.endpoints {
                    if let Endpoint::Local(pos) = ep {
                        axpy(&mut d_act[depth][*pos], 0.5 * t.chain_scale, &d_in);
                    }
                }
            }
            None => {
                if let Some(Endpoint::Local(pos)) = t.endpoints.first() {
                    axpy(&mut d_act[depth][*pos], t.chain_scale, &d_rep);
                }
            }
        }
    }

    for l in (1..=depth).rev() {
        let layer = &trace.layers[l];
        let w = &params.weights.layers[l - 1];
        let (lower, upper) = d_act.split_at_mut(l);
        let d_prev = &mut lower[l - 1];
        for (j, d) in upper[0].iter().enumerate() {
            if layer.fixed[j] || d.iter().all(|v| *v == 0.0) {
                continue;
            }
            let delta: Vec<f64> = d.iter().zip(&layer.pre[j]).map(|(g, &z)| g * act.derivative(z)).collect();
            grads.layers[l - 1].add_outer(1.0, &delta, &layer.messages[j]);
            let d_msg = w.matvec_t(&delta);
            for &(pos, c) in &layer.inputs[j] {
                axpy(&mut d_prev[pos], c, &d_msg);
            }
        }
    }

    let input = input_node.and_then(|v| trace.layers[0].position(v).map(|p| (v, d_act[0][p].clone())));
    Gradients { weights: grads, input }
}
