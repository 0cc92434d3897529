//! `attack`: attribute inference against released embeddings under
//! several background neighborhood sizes.

use std::fmt::Write as _;

use fedgnn::graph::PartitionedGraph;
use fedgnn::metrics::median;
use fedgnn::model::ModelParams;
use fedgnn::privacy::{aia_attack, sample_background, AttackConfig, AttackKnowledge};
use fedgnn::rng::{stream, Purpose};
use rand::seq::index;

use crate::{runtime, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    /// Per-hop background fanouts.
    pub fanouts: Vec<usize>,
    pub seed: u64,
    /// Dense node index of the target.
    pub target: usize,
    pub background_size: usize,
    pub mse: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Pick `count` targets among nodes whose degree reaches the largest hop-1
/// fanout; when fewer qualify, the highest-degree nodes stand in.
pub fn choose_targets(graph: &PartitionedGraph, min_degree: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut by_degree: Vec<usize> = (0..graph.num_nodes()).filter(|&v| !graph.neighbors(v).is_empty()).collect();
    by_degree.sort_by_key(|&v| (std::cmp::Reverse(graph.neighbors(v).len()), v));
    let qualified = by_degree.iter().take_while(|&&v| graph.neighbors(v).len() >= min_degree).count();
    let pool = &by_degree[..qualified.max(count.min(by_degree.len()))];
    let mut rng = stream(seed, Purpose::Attack, u64::MAX, 0, 0);
    let mut picks: Vec<usize> =
        index::sample(&mut rng, pool.len(), count.min(pool.len())).into_iter().map(|i| pool[i]).collect();
    picks.sort_unstable();
    picks
}

/// Attack every target under every fanout setting, once per seed. The
/// background for `(seed, target, setting)` comes from its own stream.
pub fn attack_trials(
    params: &ModelParams,
    graph: &PartitionedGraph,
    fanout_sets: &[Vec<usize>],
    targets_per_seed: usize,
    seeds: &[u64],
    config: &AttackConfig,
) -> Result<Vec<AttackRow>, CliError> {
    let min_degree = fanout_sets.iter().filter_map(|f| f.first().copied()).max().unwrap_or(1);
    let mut rows = Vec::new();
    for &seed in seeds {
        for target in choose_targets(graph, min_degree, targets_per_seed, seed) {
            for (s, fanouts) in fanout_sets.iter().enumerate() {
                let mut rng = stream(seed, Purpose::Attack, target as u64, s as u64, 0);
                let background = sample_background(graph, target, fanouts, &mut rng);
                let background_size = background.len();
                let knowledge = AttackKnowledge::observe(params, graph, target, background).map_err(runtime)?;
                let r = aia_attack(params, graph, target, &knowledge, config).map_err(runtime)?;
                rows.push(AttackRow {
                    fanouts: fanouts.clone(),
                    seed,
                    target,
                    background_size,
                    mse: r.mse,
                    objective: r.objective,
                    iterations: r.iterations,
                    converged: r.converged,
                });
            }
        }
    }
    Ok(rows)
}

/// Median MSE per fanout setting, in the order given.
pub fn median_mse(rows: &[AttackRow], fanout_sets: &[Vec<usize>]) -> Vec<f64> {
    fanout_sets
        .iter()
        .map(|f| median(&rows.iter().filter(|r| &r.fanouts == f).map(|r| r.mse).collect::<Vec<_>>()))
        .collect()
}

fn fanout_label(f: &[usize]) -> String {
    f.iter().map(usize::to_string).collect::<Vec<_>>().join(":")
}

pub fn attack_report_csv(graph: &PartitionedGraph, rows: &[AttackRow]) -> String {
    let mut out = String::from("fanouts,seed,target_node_id,background_size,mse,objective,iterations,converged\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fanout_label(&r.fanouts),
            r.seed,
            graph.node(r.target).id.0,
            r.background_size,
            r.mse,
            r.objective,
            r.iterations,
            r.converged
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedgnn::graph::{build_graph, ClientId, EdgeId, EdgeRecord, NodeId, NodeRecord};

    fn star(leaves: usize) -> PartitionedGraph {
        let nodes = (0..=leaves)
            .map(|i| NodeRecord { id: NodeId(i as u64), host: ClientId(0), features: vec![i as f64], label: Some(i % 2) })
            .collect();
        let edges = (1..=leaves)
            .map(|i| EdgeRecord { id: EdgeId(i as u64), src: NodeId(0), dst: NodeId(i as u64), features: vec![], label: None })
            .collect();
        build_graph(nodes, edges, 1).unwrap()
    }

    #[test]
    fn targets_prefer_high_degree() {
        let g = star(6);
        assert_eq!(choose_targets(&g, 3, 1, 0), vec![0]);
        assert_eq!(choose_targets(&g, 3, 3, 0).len(), 3);
    }
}
