//! Seed and neighborhood sampling for one local step.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use super::PartitionedGraph;

/// A training or evaluation target: a node (node task) or an edge (edge task).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Node(usize),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    /// Seeds per step (B₀).
    pub seed_count: usize,
    /// Per-hop neighbor caps; hop 1 is the hop nearest the seeds. The last
    /// entry is reused for deeper hops.
    pub fanouts: Vec<usize>,
    /// Message-passing depth L.
    pub layers: usize,
    /// Allow cross-client neighbors as fixed inputs to layers 2..=L.
    pub include_remote: bool,
}

impl SamplingSpec {
    pub fn fanout_for_layer(&self, layer: usize) -> usize {
        let hop = self.layers - layer;
        self.fanouts.get(hop).or(self.fanouts.last()).copied().unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledNode {
    pub node: usize,
    /// Sampled same-host neighbors, ascending.
    pub neighbors: Vec<usize>,
    /// Sampled cross-client neighbors, ascending. Empty unless remote inputs are enabled.
    pub remote: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub client: usize,
    pub seeds: Vec<Target>,
    /// `layers[l - 1]` holds the nodes computed at layer `l`, ascending by node.
    pub layers: Vec<Vec<SampledNode>>,
}

impl Minibatch {
    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Every node touched at any layer, plus layer-0 inputs.
    pub fn touched_nodes(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for layer in &self.layers {
            for s in layer {
                out.insert(s.node);
                out.extend(s.neighbors.iter().copied());
            }
        }
        out
    }

    /// Nodes computed at the final layer.
    pub fn final_layer_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.last().into_iter().flatten().map(|s| s.node)
    }
}

/// Draw `seed_count` targets uniformly without replacement from `pool`, then
/// sample neighborhoods top-down. Deterministic given the rng state.
///
/// An empty pool yields an empty minibatch rather than an error.
pub fn sample_minibatch<R: Rng + ?Sized>(
    graph: &PartitionedGraph,
    client: usize,
    pool: &[Target],
    spec: &SamplingSpec,
    rng: &mut R,
) -> Minibatch {
    if pool.is_empty() || spec.seed_count == 0 {
        return Minibatch { client, seeds: Vec::new(), layers: vec![Vec::new(); spec.layers] };
    }
    let take = spec.seed_count.min(pool.len());
    let mut picks = index::sample(rng, pool.len(), take).into_vec();
    picks.sort_unstable();
    let seeds: Vec<Target> = picks.into_iter().map(|i| pool[i]).collect();

    let mut current: BTreeSet<usize> = BTreeSet::new();
    for t in &seeds {
        match *t {
            Target::Node(v) => {
                current.insert(v);
            }
            Target::Edge(e) => {
                let edge = graph.edge(e);
                for v in [edge.src, edge.dst] {
                    if graph.host(v) == client {
                        current.insert(v);
                    }
                }
            }
        }
    }

    let mut layers = vec![Vec::new(); spec.layers];
    for layer in (1..=spec.layers).rev() {
        let fanout = spec.fanout_for_layer(layer);
        let remote_ok = spec.include_remote && layer >= 2;
        let mut below = BTreeSet::new();
        let mut sampled = Vec::with_capacity(current.len());
        for &v in &current {
            let local = graph.local_neighbors(v);
            let (neighbors, remote) = if remote_ok {
                let mut candidates: Vec<usize> = local.iter().chain(graph.remote_neighbors(v)).copied().collect();
                candidates.sort_unstable();
                let chosen = choose(&candidates, fanout, rng);
                chosen.into_iter().partition(|&u| graph.host(u) == graph.host(v))
            } else {
                (choose(local, fanout, rng), Vec::new())
            };
            below.insert(v);
            below.extend(neighbors.iter().copied());
            sampled.push(SampledNode { node: v, neighbors, remote });
        }
        layers[layer - 1] = sampled;
        current = below;
    }
    Minibatch { client, seeds, layers }
}

fn choose<R: Rng + ?Sized>(candidates: &[usize], fanout: usize, rng: &mut R) -> Vec<usize> {
    if candidates.len() <= fanout {
        return candidates.to_vec();
    }
    let mut idx = index::sample(rng, candidates.len(), fanout).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| candidates[i]).collect()
}
