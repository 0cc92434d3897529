//! The outer round loop.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::graph::PartitionedGraph;
use crate::model::{ModelConfig, ModelParams, NoRemote, ParamSet, RemoteEmbeddings, TaskKind};
use crate::privacy::ReleaseHistory;
use crate::rng::{stream, Purpose};

use super::comm::{embedding_bytes, tensor_set_bytes, CommLedger, RoundComm};
use super::{
    default_split, evaluate, global_gradient, local_update, server_round, ClientContext, ClientOutput, ClientState,
    GlobalEmbeddingBuffer, Hyperparams, SimError, TaskSetup,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_macro_f1: f64,
    /// Per client; `None` for clients without held-out targets.
    pub client_f1: Vec<Option<f64>>,
    pub grad_norm_sq: Option<f64>,
    /// Cumulative bytes uploaded by clients.
    pub bytes_up: u64,
    /// Cumulative bytes sent to clients.
    pub bytes_down: u64,
    /// Embeddings released this round.
    pub emb_released: usize,
    pub wall_ms: u64,
    /// Sum over clients of their local minibatch losses this round.
    pub train_loss: f64,
}

/// One released embedding: `(round, client, node)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReleaseEvent {
    pub round: usize,
    pub client: usize,
    pub node: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub setup: TaskSetup,
    pub metrics: Vec<RoundMetrics>,
    /// Final global model (client 0's model when clients train alone).
    pub params: ModelParams,
    /// Final model per client.
    pub client_params: Vec<ModelParams>,
    pub ledger: CommLedger,
    pub history: ReleaseHistory,
    pub releases: Vec<ReleaseEvent>,
    pub buffer: GlobalEmbeddingBuffer,
}

impl ExperimentResult {
    pub fn final_f1(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.mean_macro_f1)
    }
}

fn infer_task(graph: &PartitionedGraph, forced: Option<TaskKind>) -> Result<TaskKind, SimError> {
    match forced {
        Some(t) => Ok(t),
        None if graph.has_edge_labels() => Ok(TaskKind::Edge),
        None if graph.has_node_labels() => Ok(TaskKind::Node),
        None => Err(SimError::Config("graph has no labels".into())),
    }
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Train for `hyper.rounds` rounds and evaluate on the held-out split.
pub fn run_experiment(graph: &PartitionedGraph, hyper: &Hyperparams) -> Result<ExperimentResult, SimError> {
    hyper.validate()?;
    let task = infer_task(graph, hyper.task)?;
    let rule = hyper.split.unwrap_or_else(|| default_split(task));
    let setup = TaskSetup::new(graph, task, rule, hyper.class_weighting, hyper.algorithm.exchanges_embeddings(), hyper.seed)?;
    let config = ModelConfig {
        arch: hyper.model.arch,
        activation: hyper.model.activation,
        gin_eps: hyper.model.gin_eps,
        input_dim: graph.feature_dim(),
        hidden: hyper.model.hidden.clone(),
        num_classes: setup.num_classes,
        task,
    };
    let init = ModelParams::init(config, &mut stream(hyper.seed, Purpose::Init, 0, 0, 0));
    let n = graph.num_clients();
    let ctx = ClientContext { graph, setup: &setup, hyper };
    let mut states: Vec<ClientState> = (0..n).map(|i| ClientState::new(&ctx, i)).collect();
    let mut client_params: Vec<ModelParams> = vec![init.clone(); n];
    let mut client_grads: Vec<ParamSet> = vec![init.weights.zeros_like(); n];
    let mut global = init.clone();
    let mut global_grad = init.weights.zeros_like();
    let mut buffer = GlobalEmbeddingBuffer::new();
    let mut history = ReleaseHistory::default();
    let mut releases = Vec::new();
    let mut ledger = CommLedger::default();
    let mut metrics = Vec::new();
    let model_bytes = tensor_set_bytes(&init.weights) * 2;
    let emb_bytes = embedding_bytes(init.config.embedding_dim());
    let aggregates = hyper.algorithm.aggregates();

    for round in 1..=hyper.rounds {
        let started = hyper.wall_clock.then(Instant::now);
        let inputs: Vec<(&ModelParams, &ParamSet)> = if aggregates {
            vec![(&global, &global_grad); n]
        } else {
            client_params.iter().zip(&client_grads).collect()
        };
        let run_one = |(state, (p, g)): (&mut ClientState, &(&ModelParams, &ParamSet))| {
            local_update(&ctx, state, p, g, &buffer, round)
        };
        let outputs: Vec<ClientOutput> = if hyper.parallel {
            states.par_iter_mut().zip(inputs.par_iter()).map(run_one).collect::<Result<_, _>>()?
        } else {
            states.iter_mut().zip(inputs.iter()).map(run_one).collect::<Result<_, _>>()?
        };
        let train_loss = outputs.iter().map(|o| o.loss).sum();

        let mut comm = RoundComm::default();
        let mut emb_released = 0;
        if aggregates {
            for o in &outputs {
                for (&v, h) in &o.released {
                    history.record(v, h);
                    releases.push(ReleaseEvent { round, client: o.client, node: v });
                    emb_released += 1;
                    comm.embeddings_down += graph.neighbor_clients(v).len() as u64;
                }
            }
            let server = server_round(&outputs, n, hyper, round, &mut buffer)?;
            global.weights = server.params;
            global_grad = server.grad;
            comm.embeddings_up = emb_released as u64;
            comm.model_bytes = 2 * n as u64 * model_bytes;
            comm.embedding_bytes = (comm.embeddings_up + comm.embeddings_down) * emb_bytes;
            comm.bytes_up = n as u64 * model_bytes + comm.embeddings_up * emb_bytes;
            comm.bytes_down = n as u64 * model_bytes + comm.embeddings_down * emb_bytes;
            comm.tensors_sent = 2 * n as u64 * 2 * init.weights.tensors().len() as u64;
        } else {
            for o in outputs {
                client_params[o.client] = o.params;
                client_grads[o.client] = o.grad;
            }
        }
        ledger.push(comm);

        if round % hyper.eval_every == 0 || round == hyper.rounds {
            let evaluated: Vec<&ModelParams> = if aggregates { vec![&global; n] } else { client_params.iter().collect() };
            let client_f1 = {
                let remote: &dyn RemoteEmbeddings = if hyper.algorithm.exchanges_embeddings() { &buffer } else { &NoRemote };
                evaluate(graph, &setup, &evaluated, remote)?
            };
            let grad_norm_sq = if hyper.grad_norm && aggregates {
                Some(global_gradient(&global, graph, &setup)?.squared_norm())
            } else {
                None
            };
            let (bytes_up, bytes_down) = ledger.cumulative().last().copied().unwrap_or((0, 0));
            metrics.push(RoundMetrics {
                round,
                mean_macro_f1: mean_present(&client_f1),
                client_f1,
                grad_norm_sq,
                bytes_up,
                bytes_down,
                emb_released,
                wall_ms: started.map_or(0, |t| t.elapsed().as_millis() as u64),
                train_loss,
            });
        }
    }

    if aggregates {
        client_params = vec![global.clone(); n];
    } else {
        global = client_params[0].clone();
    }
    Ok(ExperimentResult { setup, metrics, params: global, client_params, ledger, history, releases, buffer })
}

/// `metrics.csv` contents. Floats use shortest round-trip formatting; a
/// gradient norm that was not computed is left empty.
pub fn metrics_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::from("round,mean_macro_f1,grad_norm_sq,bytes_up,bytes_down,emb_released,wall_ms\n");
    for m in metrics {
        let g = m.grad_norm_sq.map(|g| g.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{},{}", m.round, m.mean_macro_f1, g, m.bytes_up, m.bytes_down, m.emb_released, m.wall_ms)
            .unwrap();
    }
    out
}
