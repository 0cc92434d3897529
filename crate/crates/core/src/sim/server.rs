//! Server aggregation.

use crate::privacy::{clip_tensors, noise_tensors};
use crate::model::ParamSet;
use crate::rng::{stream, Purpose};

use super::{ClientOutput, GlobalEmbeddingBuffer, Hyperparams, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct ServerOutput {
    pub params: ParamSet,
    pub grad: ParamSet,
    /// Nodes whose buffer entry was refreshed this round, ascending.
    pub refreshed: Vec<usize>,
}

fn aggregate(sets: Vec<ParamSet>, clip: f64, sigma: f64, seed: u64, round: usize, which: u64) -> ParamSet {
    let mut sets = sets;
    if sigma > 0.0 {
        for s in &mut sets {
            clip_tensors(s, clip);
        }
    }
    let refs: Vec<&ParamSet> = sets.iter().collect();
    let mut mean = ParamSet::mean(&refs);
    if sigma > 0.0 {
        noise_tensors(&mut mean, sigma, &mut stream(seed, Purpose::AggregateNoise, round as u64, which, 0));
    }
    mean
}

/// Average parameters and gradient estimators over all clients in
/// ascending client order and store this round's released embeddings.
///
/// With `σ₁ > 0` (resp. `σ₂ > 0`) every client's parameters (resp.
/// gradient estimator) are clipped per tensor to `clip_model` and one
/// shared Gaussian draw is added to the average.
pub fn server_round(
    outputs: &[ClientOutput],
    num_clients: usize,
    hyper: &Hyperparams,
    round: usize,
    buffer: &mut GlobalEmbeddingBuffer,
) -> Result<ServerOutput, SimError> {
    if outputs.len() != num_clients {
        return Err(SimError::Protocol(format!("expected {num_clients} client outputs, got {}", outputs.len())));
    }
    for (i, o) in outputs.iter().enumerate() {
        if o.client != i {
            return Err(SimError::Protocol(format!("missing output for client {i}")));
        }
    }
    let noise = &hyper.noise;
    let params = aggregate(outputs.iter().map(|o| o.params.weights.clone()).collect(), noise.clip_model, noise.sigma1, hyper.seed, round, 0);
    let grad = aggregate(outputs.iter().map(|o| o.grad.clone()).collect(), noise.clip_model, noise.sigma2, hyper.seed, round, 1);
    let mut refreshed = Vec::new();
    for o in outputs {
        for (&v, value) in &o.released_sent {
            buffer.store(v, value.clone(), round);
            refreshed.push(v);
        }
    }
    refreshed.sort_unstable();
    Ok(ServerOutput { params, grad, refreshed })
}
