//! Targets, splits, per-client training pools and loss weights.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use crate::graph::{Adjacency, PartitionedGraph, Target};
use crate::model::{backward, forward_exact, ModelError, ModelParams, ParamSet, TaskKind, WeightedTarget};
use crate::rng::{stream, Purpose};

use super::SimError;

/// How held-out targets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Labeled targets in id order: first 60% train, next 20% validation, last 20% test.
    Temporal,
    /// Labeled targets shuffled with the split stream, then cut 60/20/20.
    Random,
}

impl std::str::FromStr for SplitRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "temporal" => Ok(SplitRule::Temporal),
            "random" => Ok(SplitRule::Random),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    /// Weights inversely proportional to training class frequency, with
    /// sample-weighted mean 1.
    Inverse,
    None,
}

impl std::str::FromStr for ClassWeighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "inverse" => Ok(ClassWeighting::Inverse),
            "none" => Ok(ClassWeighting::None),
            other => Err(format!("unknown class weighting '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Target>,
    pub val: Vec<Target>,
    pub test: Vec<Target>,
}

/// Default split rule per task: temporal for edges, random for nodes.
pub fn default_split(task: TaskKind) -> SplitRule {
    match task {
        TaskKind::Edge => SplitRule::Temporal,
        TaskKind::Node => SplitRule::Random,
    }
}

pub fn labeled_targets(graph: &PartitionedGraph, task: TaskKind) -> Vec<Target> {
    match task {
        TaskKind::Edge => (0..graph.num_edges()).filter(|&e| graph.edge(e).label.is_some()).map(Target::Edge).collect(),
        TaskKind::Node => (0..graph.num_nodes()).filter(|&v| graph.node(v).label.is_some()).map(Target::Node).collect(),
    }
}

pub fn split_targets(graph: &PartitionedGraph, task: TaskKind, rule: SplitRule, seed: u64) -> Split {
    let mut targets = labeled_targets(graph, task);
    if rule == SplitRule::Random {
        targets.shuffle(&mut stream(seed, Purpose::Split, 0, 0, 0));
    }
    let n = targets.len();
    let a = (n as f64 * 0.6).round() as usize;
    let b = (n as f64 * 0.8).round() as usize;
    let mut train = targets[..a].to_vec();
    let mut val = targets[a..b].to_vec();
    let mut test = targets[b..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Split { train, val, test }
}

pub fn target_label(graph: &PartitionedGraph, t: Target) -> Option<usize> {
    match t {
        Target::Node(v) => graph.node(v).label,
        Target::Edge(e) => graph.edge(e).label,
    }
}

/// A training pool entry: the target, its share `w` of the loss on this
/// client (½ for a cross-client edge seen by both clients, else 1), and its
/// class weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub target: Target,
    pub share: f64,
    pub class_weight: f64,
}

/// Everything about the learning problem that does not change during training.
#[derive(Debug, Clone)]
pub struct TaskSetup {
    pub task: TaskKind,
    pub num_classes: usize,
    pub split: Split,
    pub class_weights: Vec<f64>,
    /// Per-client training pools.
    pub pools: Vec<Vec<PoolEntry>>,
    /// Per-client held-out targets (all targets in the client's view).
    pub test: Vec<Vec<Target>>,
    /// `(1/N) Σ_i Σ_{x ∈ pool_i} share(x)`; dividing client losses by it
    /// makes the client average equal the global mean loss.
    pub normalizer: f64,
}

fn client_targets(graph: &PartitionedGraph, client: usize, set: &[Target], keep_cross: bool) -> Vec<Target> {
    set.iter()
        .copied()
        .filter(|&t| match t {
            Target::Node(v) => graph.host(v) == client,
            Target::Edge(e) => {
                let edge = graph.edge(e);
                let touches = graph.host(edge.src) == client || graph.host(edge.dst) == client;
                touches && (keep_cross || !graph.is_cross_client(e))
            }
        })
        .collect()
}

impl TaskSetup {
    /// `train_cross_edges` keeps cross-client edges in training pools.
    pub fn new(
        graph: &PartitionedGraph,
        task: TaskKind,
        rule: SplitRule,
        weighting: ClassWeighting,
        train_cross_edges: bool,
        seed: u64,
    ) -> Result<Self, SimError> {
        let split = split_targets(graph, task, rule, seed);
        if split.train.is_empty() {
            return Err(SimError::Config("no labeled training targets".into()));
        }
        let all = labeled_targets(graph, task);
        let num_classes = all.iter().filter_map(|&t| target_label(graph, t)).max().map_or(0, |m| m + 1).max(2);

        let mut counts = vec![0usize; num_classes];
        for &t in &split.train {
            counts[target_label(graph, t).expect("labeled")] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count() as f64;
        let total = split.train.len() as f64;
        let class_weights: Vec<f64> = counts
            .iter()
            .map(|&c| match weighting {
                ClassWeighting::Inverse if c > 0 => total / (present * c as f64),
                _ => 1.0,
            })
            .collect();

        let n = graph.num_clients();
        let mut pools = Vec::with_capacity(n);
        let mut test = Vec::with_capacity(n);
        let mut share_sum = 0.0;
        for i in 0..n {
            let pool: Vec<PoolEntry> = client_targets(graph, i, &split.train, train_cross_edges)
                .into_iter()
                .map(|t| {
                    let share = match t {
                        Target::Edge(e) if graph.is_cross_client(e) => 0.5,
                        _ => 1.0,
                    };
                    let class_weight = class_weights[target_label(graph, t).expect("labeled")];
                    PoolEntry { target: t, share, class_weight }
                })
                .collect();
            share_sum += pool.iter().map(|p| p.share).sum::<f64>();
            pools.push(pool);
            test.push(client_targets(graph, i, &split.test, true));
        }
        if share_sum == 0.0 {
            return Err(SimError::Config("every client training pool is empty".into()));
        }
        Ok(TaskSetup { task, num_classes, split, class_weights, pools, test, normalizer: share_sum / n as f64 })
    }

    /// Loss weights for `seeds` drawn from client `i`'s pool, scaled so the
    /// minibatch loss is an unbiased estimate of the client objective.
    pub fn seed_weights(&self, client: usize, seeds: &[Target], lookup: &HashMap<Target, PoolEntry>) -> Vec<WeightedTarget> {
        if seeds.is_empty() {
            return Vec::new();
        }
        let scale = self.pools[client].len() as f64 / (seeds.len() as f64 * self.normalizer);
        seeds
            .iter()
            .map(|t| {
                let p = lookup[t];
                WeightedTarget { target: *t, weight: scale * p.share * p.class_weight, chain_scale: 1.0 / p.share }
            })
            .collect()
    }

    pub fn pool_lookup(&self, client: usize) -> HashMap<Target, PoolEntry> {
        self.pools[client].iter().map(|p| (p.target, *p)).collect()
    }

    /// Full-pool targets of client `i` weighted as its exact objective `F_i`.
    pub fn client_objective(&self, client: usize) -> Vec<WeightedTarget> {
        self.pools[client]
            .iter()
            .map(|p| WeightedTarget {
                target: p.target,
                weight: p.share * p.class_weight / self.normalizer,
                chain_scale: 1.0 / p.share,
            })
            .collect()
    }

    /// Targets weighted as the global objective `F = (1/N) Σ_i F_i`, with
    /// both endpoints of every edge differentiated.
    pub fn global_objective(&self) -> Vec<WeightedTarget> {
        let n = self.pools.len() as f64;
        let mut merged: BTreeMap<Target, f64> = BTreeMap::new();
        for pool in &self.pools {
            for p in pool {
                *merged.entry(p.target).or_insert(0.0) += p.share * p.class_weight;
            }
        }
        merged
            .into_iter()
            .map(|(target, w)| WeightedTarget { target, weight: w / (n * self.normalizer), chain_scale: 1.0 })
            .collect()
    }
}

/// `∇F(W)` computed exactly over the full graph (same-host adjacency).
pub fn global_gradient(params: &ModelParams, graph: &PartitionedGraph, setup: &TaskSetup) -> Result<ParamSet, ModelError> {
    let trace = forward_exact(params, graph, Adjacency::IntraClient, &setup.global_objective(), &HashMap::new())?;
    Ok(backward(&trace, params).weights)
}

/// `∇F_i(W)` for one client, with cross-client endpoints fixed to `remote`.
pub fn client_gradient(
    params: &ModelParams,
    graph: &PartitionedGraph,
    setup: &TaskSetup,
    client: usize,
    remote: &HashMap<usize, Vec<f64>>,
) -> Result<ParamSet, ModelError> {
    let fixed: HashMap<usize, Vec<f64>> =
        remote.iter().filter(|(&v, _)| graph.host(v) != client).map(|(&v, h)| (v, h.clone())).collect();
    let trace = forward_exact(params, graph, Adjacency::IntraClient, &setup.client_objective(client), &fixed)?;
    Ok(backward(&trace, params).weights)
}

/// Global mean loss `F(W)`.
pub fn global_loss(params: &ModelParams, graph: &PartitionedGraph, setup: &TaskSetup) -> Result<f64, ModelError> {
    Ok(forward_exact(params, graph, Adjacency::IntraClient, &setup.global_objective(), &HashMap::new())?.loss)
}
