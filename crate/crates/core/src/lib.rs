//! Federated training of graph neural networks over a graph split across
//! clients, with moving-average estimators for embeddings and gradients and
//! metric differential privacy for exchanged embeddings.

// Negated float comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod estimators;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod sim;
