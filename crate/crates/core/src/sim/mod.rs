//! Round-based federated training simulator.
//!
//! Each round the server broadcasts parameters `W` and the gradient
//! estimator `G`; every client runs `K` local steps on its own subgraph,
//! reading cross-client endpoint embeddings from the global buffer as it
//! stood at the end of the previous round; the server then averages `W` and
//! `G` in client order and stores the boundary embeddings released this
//! round.

mod buffer;
mod client;
mod comm;
mod eval;
mod run;
mod server;
mod setup;

use thiserror::Error;

use crate::estimators::{check_rate, EstimatorError};
use crate::model::{Activation, Arch, ModelError, TaskKind};
use crate::privacy::{NoiseConfig, PrivacyError};

pub use buffer::{BufferEntry, GlobalEmbeddingBuffer};
pub use client::{local_update, ClientContext, ClientOutput, ClientState};
pub use comm::{comm_report, embedding_bytes, tensor_set_bytes, CommLedger, RoundComm};
pub use eval::evaluate;
pub use run::{metrics_csv, run_experiment, ExperimentResult, ReleaseEvent, RoundMetrics};
pub use server::{server_round, ServerOutput};
pub use setup::{
    client_gradient, default_split, global_gradient, global_loss, labeled_targets, split_targets, target_label,
    ClassWeighting, PoolEntry, Split, SplitRule, TaskSetup,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("non-finite value in {tensor} on client {client} at round {round}, step {step}")]
    NonFinite { client: usize, round: usize, step: usize, tensor: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Moving-average embeddings and gradients with cross-client exchange.
    CeFedGnn,
    /// Cross-client edges dropped; no embedding exchange.
    FedAvg,
    /// Every client trains alone: no aggregation, no exchange.
    SingleClient,
    /// Exchange the last computed embedding without moving average (γ = 1).
    StaleEmb,
    /// No gradient moving average (β = 1).
    NoGradMa,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CeFedGnn => "ce_fedgnn",
            Algorithm::FedAvg => "fedavg",
            Algorithm::SingleClient => "single_client",
            Algorithm::StaleEmb => "stale_emb",
            Algorithm::NoGradMa => "no_grad_ma",
        }
    }

    /// Whether clients exchange boundary embeddings.
    pub fn exchanges_embeddings(self) -> bool {
        matches!(self, Algorithm::CeFedGnn | Algorithm::StaleEmb | Algorithm::NoGradMa)
    }

    pub fn aggregates(self) -> bool {
        self != Algorithm::SingleClient
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ce_fedgnn" => Ok(Algorithm::CeFedGnn),
            "fedavg" => Ok(Algorithm::FedAvg),
            "single_client" => Ok(Algorithm::SingleClient),
            "stale_emb" => Ok(Algorithm::StaleEmb),
            "no_grad_ma" => Ok(Algorithm::NoGradMa),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

/// How cross-client neighbors enter message passing below the edge head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteMode {
    /// Layer means use same-host neighbors only; remote nodes contribute
    /// only as edge endpoints.
    IntraClient,
    /// Remote neighbors also enter layers `2..=L` as their buffered
    /// final-layer embedding. Requires equal hidden widths.
    BufferedFinal,
}

impl std::str::FromStr for RemoteMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "intra_client" | "intra" => Ok(RemoteMode::IntraClient),
            "buffered_final" | "buffered" => Ok(RemoteMode::BufferedFinal),
            other => Err(format!("unknown remote mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub activation: Activation,
    pub gin_eps: f64,
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { arch: Arch::SageMean, activation: Activation::Tanh, gin_eps: 0.0, hidden: vec![16, 16] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub rounds: usize,
    pub k_local: usize,
    pub lr: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Seeds per local step.
    pub batch_size: usize,
    pub fanouts: Vec<usize>,
    pub algorithm: Algorithm,
    pub model: ModelSpec,
    /// Forced task kind; inferred from the labels when `None`.
    pub task: Option<TaskKind>,
    pub noise: NoiseConfig,
    pub remote_mode: RemoteMode,
    pub class_weighting: ClassWeighting,
    /// Defaults to temporal for edge tasks and random for node tasks.
    pub split: Option<SplitRule>,
    pub seed: u64,
    /// Run clients of a round on the rayon pool.
    pub parallel: bool,
    /// Evaluate every this many rounds (the final round is always evaluated).
    pub eval_every: usize,
    /// Record the exact full-graph `‖∇F‖²` at evaluated rounds.
    pub grad_norm: bool,
    /// Record wall-clock time; off keeps outputs byte-reproducible.
    pub wall_clock: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rounds: 50,
            k_local: 32,
            lr: 0.1,
            gamma: 0.5,
            beta: 0.9,
            batch_size: 64,
            fanouts: vec![10, 10],
            algorithm: Algorithm::CeFedGnn,
            model: ModelSpec::default(),
            task: None,
            noise: NoiseConfig::default(),
            remote_mode: RemoteMode::IntraClient,
            class_weighting: ClassWeighting::Inverse,
            split: None,
            seed: 0,
            parallel: false,
            eval_every: 1,
            grad_norm: false,
            wall_clock: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        for (name, v) in [("rounds", self.rounds), ("k_local", self.k_local), ("batch_size", self.batch_size), ("eval_every", self.eval_every)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        check_rate("lr", self.lr)?;
        check_rate("gamma", self.gamma)?;
        check_rate("beta", self.beta)?;
        if self.fanouts.is_empty() || self.fanouts.contains(&0) {
            return bad("fanouts must be a non-empty list of positive integers".into());
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return bad("hidden must be a non-empty list of positive widths".into());
        }
        if self.remote_mode == RemoteMode::BufferedFinal && self.model.hidden.windows(2).any(|w| w[0] != w[1]) {
            return bad("buffered_final remote mode needs equal hidden widths".into());
        }
        self.noise.validate()?;
        Ok(())
    }

    /// Mixing rate actually used for embeddings.
    pub fn effective_gamma(&self) -> f64 {
        if self.algorithm == Algorithm::StaleEmb {
            1.0
        } else {
            self.gamma
        }
    }

    /// Mixing rate actually used for gradients.
    pub fn effective_beta(&self) -> f64 {
        if self.algorithm == Algorithm::NoGradMa {
            1.0
        } else {
            self.beta
        }
    }
}
