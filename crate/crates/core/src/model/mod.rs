//! Message-passing GNN: parameters, forward traces and the manual backward pass.

mod backward;
mod checkpoint;
mod forward;
mod stochastic;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use backward::{backward, backward_from_embeddings, Gradients};
pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, read_checkpoint, write_checkpoint, CheckpointError};
pub use forward::{
    aggregation_coefficients, forward_embeddings, forward_exact, softmax, Endpoint, ForwardTrace, LayerTrace,
    TargetTrace, WeightedTarget,
};
pub use stochastic::{forward_stochastic, NoRemote, RemoteEmbeddings};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch at {tensor}: expected {expected:?}, found {found:?}")]
    Dimension { tensor: String, expected: (usize, usize), found: (usize, usize) },
    #[error("target {0} has no label")]
    MissingLabel(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("edge task requires an edge head")]
    MissingEdgeHead,
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    SageMean,
    Gcn,
    Gin,
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sage" | "sage_mean" => Ok(Arch::SageMean),
            "gcn" => Ok(Arch::Gcn),
            "gin" => Ok(Arch::Gin),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Slope 0.01 on the negative side.
    LeakyRelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.01 * x
                }
            }
        }
    }

    /// Derivative evaluated at the pre-activation.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
        }
    }

    pub fn map(self, pre: &[f64]) -> Vec<f64> {
        pre.iter().map(|&x| self.apply(x)).collect()
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "leaky_relu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Node,
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub activation: Activation,
    pub gin_eps: f64,
    pub input_dim: usize,
    /// Output width of each message-passing layer; its length is L.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub task: TaskKind,
}

impl ModelConfig {
    pub fn num_layers(&self) -> usize {
        self.hidden.len()
    }

    pub fn embedding_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&self.input_dim)
    }
}

/// Weight tensors in a fixed order: layers, then edge head, then task head.
///
/// Used for parameters, gradients and gradient estimators alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<Matrix>,
    pub edge_head: Option<Matrix>,
    pub task_head: Matrix,
}

impl ParamSet {
    pub fn zeros_for(config: &ModelConfig) -> Self {
        let mut layers = Vec::with_capacity(config.num_layers());
        let mut fan_in = config.input_dim;
        for &width in &config.hidden {
            layers.push(Matrix::zeros(width, fan_in));
            fan_in = width;
        }
        let d = config.embedding_dim();
        ParamSet {
            layers,
            edge_head: (config.task == TaskKind::Edge).then(|| Matrix::zeros(d, d)),
            task_head: Matrix::zeros(config.num_classes, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            layers: self.layers.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
            edge_head: self.edge_head.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
            task_head: Matrix::zeros(self.task_head.rows(), self.task_head.cols()),
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.layers.len()).map(|l| format!("layer{l}")).collect();
        if self.edge_head.is_some() {
            names.push("edge_head".into());
        }
        names.push("task_head".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().collect();
        out.extend(self.edge_head.iter());
        out.push(&self.task_head);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.layers.iter_mut().collect();
        out.extend(self.edge_head.iter_mut());
        out.push(&mut self.task_head);
        out
    }

    pub fn num_elements(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    /// Name of the first tensor whose shape differs from `other`'s.
    pub fn shape_mismatch(&self, other: &ParamSet) -> Option<String> {
        let names = self.tensor_names();
        if names != other.tensor_names() {
            return Some(format!("tensor set {:?} vs {:?}", names, other.tensor_names()));
        }
        self.tensors()
            .iter()
            .zip(other.tensors())
            .zip(names)
            .find(|((a, b), _)| a.shape() != b.shape())
            .map(|(_, n)| n)
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn non_finite(&self) -> Option<String> {
        self.tensors().iter().zip(self.tensor_names()).find(|(m, _)| !m.is_finite()).map(|(_, n)| n)
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().into_iter().for_each(|m| m.scale(s));
    }

    /// `self += alpha · other`; shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &ParamSet) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|m| m.as_slice().iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// Flattened copy of every entry, tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    /// Arithmetic mean, accumulated in slice order.
    pub fn mean(sets: &[&ParamSet]) -> ParamSet {
        let mut out = sets[0].zeros_like();
        for s in sets {
            out.axpy(1.0, s);
        }
        out.scale(1.0 / sets.len() as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: ParamSet,
}

impl ModelParams {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let mut weights = ParamSet::zeros_for(&config);
        for m in weights.tensors_mut() {
            let bound = 1.0 / (m.cols().max(1) as f64).sqrt();
            for v in m.as_mut_slice() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        ModelParams { config, weights }
    }

    pub fn with_weights(&self, weights: ParamSet) -> Self {
        ModelParams { config: self.config.clone(), weights }
    }

    /// Check the dimension chain against the config.
    pub fn validate(&self) -> Result<(), ModelError> {
        let expected = ParamSet::zeros_for(&self.config);
        if expected.tensor_names() != self.weights.tensor_names() {
            return Err(if self.config.task == TaskKind::Edge && self.weights.edge_head.is_none() {
                ModelError::MissingEdgeHead
            } else {
                ModelError::Config(format!(
                    "tensor set {:?} does not match config {:?}",
                    self.weights.tensor_names(),
                    expected.tensor_names()
                ))
            });
        }
        for ((e, f), name) in expected.tensors().iter().zip(self.weights.tensors()).zip(expected.tensor_names()) {
            if e.shape() != f.shape() {
                return Err(ModelError::Dimension { tensor: name, expected: e.shape(), found: f.shape() });
            }
        }
        Ok(())
    }
}
