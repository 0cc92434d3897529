//! One client's local update: `K` sampled steps with moving-average
//! estimators, then release of touched boundary embeddings.

use std::collections::{BTreeMap, HashMap};

use crate::estimators::{EmbeddingState, GradientMA, Stamp};
use crate::graph::{sample_minibatch, Adjacency, PartitionedGraph, SamplingSpec, Target};
use crate::model::{backward, forward_stochastic, ModelParams, NoRemote, ParamSet, RemoteEmbeddings};
use crate::privacy::clip_and_noise;
use crate::rng::{stream, Purpose};

use super::{GlobalEmbeddingBuffer, Hyperparams, RemoteMode, PoolEntry, SimError, TaskSetup};

/// Read-only inputs shared by every client of an experiment.
pub struct ClientContext<'a> {
    pub graph: &'a PartitionedGraph,
    pub setup: &'a TaskSetup,
    pub hyper: &'a Hyperparams,
}

impl ClientContext<'_> {
    pub fn sampling_spec(&self) -> SamplingSpec {
        SamplingSpec {
            seed_count: self.hyper.batch_size,
            fanouts: self.hyper.fanouts.clone(),
            layers: self.hyper.model.hidden.len(),
            include_remote: self.hyper.remote_mode == RemoteMode::BufferedFinal && self.hyper.algorithm.exchanges_embeddings(),
        }
    }

    fn adjacency(&self) -> Adjacency {
        match self.hyper.remote_mode {
            RemoteMode::IntraClient => Adjacency::IntraClient,
            RemoteMode::BufferedFinal => Adjacency::Full,
        }
    }
}

/// State a client keeps across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client: usize,
    pub embeddings: EmbeddingState,
    pool: Vec<Target>,
    lookup: HashMap<Target, PoolEntry>,
}

impl ClientState {
    pub fn new(ctx: &ClientContext<'_>, client: usize) -> Self {
        let view = ctx.graph.view(client);
        let embeddings = EmbeddingState::new(&view.nodes, &ctx.hyper.model.hidden, ctx.hyper.model.activation);
        let pool = ctx.setup.pools[client].iter().map(|p| p.target).collect();
        ClientState { client, embeddings, pool, lookup: ctx.setup.pool_lookup(client) }
    }
}

#[derive(Debug, Clone)]
pub struct ClientOutput {
    pub client: usize,
    pub params: ModelParams,
    pub grad: ParamSet,
    /// Final-layer moving-average embedding of each boundary node touched
    /// this round, before clipping and noise.
    pub released: BTreeMap<usize, Vec<f64>>,
    /// The values actually sent: clipped and noised when `σ₀ > 0`.
    pub released_sent: BTreeMap<usize, Vec<f64>>,
    /// Sum of minibatch losses over the round.
    pub loss: f64,
}

/// Run `K` local steps from the broadcast `(params_in, grad_in)`.
pub fn local_update(
    ctx: &ClientContext<'_>,
    state: &mut ClientState,
    params_in: &ModelParams,
    grad_in: &ParamSet,
    buffer: &GlobalEmbeddingBuffer,
    round: usize,
) -> Result<ClientOutput, SimError> {
    let hyper = ctx.hyper;
    let client = state.client;
    let spec = ctx.sampling_spec();
    let adjacency = ctx.adjacency();
    let gamma = hyper.effective_gamma();
    let remote: &dyn RemoteEmbeddings = if hyper.algorithm.exchanges_embeddings() { buffer } else { &NoRemote };
    let mut params = params_in.clone();
    let mut grad = GradientMA::new(grad_in.clone(), hyper.effective_beta())?;
    let mut touched_boundary = std::collections::BTreeSet::new();
    let mut loss = 0.0;

    for step in 0..hyper.k_local {
        let mut rng = stream(hyper.seed, Purpose::Sampling, client as u64, round as u64, step as u64);
        let mb = sample_minibatch(ctx.graph, client, &state.pool, &spec, &mut rng);
        if mb.is_empty() {
            continue;
        }
        let targets = ctx.setup.seed_weights(client, &mb.seeds, &state.lookup);
        let trace = forward_stochastic(
            &params,
            ctx.graph,
            adjacency,
            &mb,
            &targets,
            &mut state.embeddings,
            remote,
            gamma,
            Stamp { round, step },
        )?;
        loss += trace.loss;
        let g = backward(&trace, &params);
        let non_finite = |tensor: String| SimError::NonFinite { client, round, step, tensor };
        if let Some(t) = g.weights.non_finite() {
            return Err(non_finite(t));
        }
        grad.update(&g.weights)?;
        params.weights.axpy(-hyper.lr, &grad.value);
        if let Some(t) = params.weights.non_finite() {
            return Err(non_finite(t));
        }
        for v in mb.final_layer_nodes() {
            if !ctx.graph.remote_neighbors(v).is_empty() {
                touched_boundary.insert(v);
            }
        }
    }

    let mut released = BTreeMap::new();
    let mut released_sent = BTreeMap::new();
    if hyper.algorithm.exchanges_embeddings() {
        let depth = hyper.model.hidden.len();
        let noise = &hyper.noise;
        let mut rng = stream(hyper.seed, Purpose::ReleaseNoise, client as u64, round as u64, 0);
        for v in touched_boundary {
            let h = state.embeddings.act(v, depth)?.to_vec();
            let sent = if noise.sigma0 > 0.0 { clip_and_noise(&h, noise.clip_embed, noise.sigma0, &mut rng) } else { h.clone() };
            released.insert(v, h);
            released_sent.insert(v, sent);
        }
    }
    Ok(ClientOutput { client, params, grad: grad.value, released, released_sent, loss })
}
