//! Held-out evaluation.
//!
//! Each client embeds its own endpoints exactly over same-host
//! neighborhoods. The remote endpoint of a cross-client test edge is read
//! from the global buffer, as it would be at deployment: the value last
//! released (clipped and noised when noise is on), or zero if the node was
//! never released. Algorithms without exchange always see zero.

use std::collections::HashMap;

use crate::graph::{Adjacency, PartitionedGraph, Target};
use crate::metrics::macro_f1;
use crate::model::{forward_exact, ModelParams, RemoteEmbeddings, WeightedTarget};

use super::{SimError, TaskSetup};

/// Macro-F1 per client on its held-out targets; `None` when it has none.
///
/// `params[i]` is the model client `i` evaluates with.
pub fn evaluate(
    graph: &PartitionedGraph,
    setup: &TaskSetup,
    params: &[&ModelParams],
    remote: &dyn RemoteEmbeddings,
) -> Result<Vec<Option<f64>>, SimError> {
    let mut out = Vec::with_capacity(graph.num_clients());
    for (client, targets) in setup.test.iter().enumerate() {
        if targets.is_empty() {
            out.push(None);
            continue;
        }
        let dim = params[client].config.embedding_dim();
        let mut fixed = HashMap::new();
        for t in targets {
            if let Target::Edge(e) = *t {
                let edge = graph.edge(e);
                for v in [edge.src, edge.dst] {
                    if graph.host(v) != client {
                        let value = remote.get(v).map_or_else(|| vec![0.0; dim], <[f64]>::to_vec);
                        fixed.insert(v, value);
                    }
                }
            }
        }
        let weighted: Vec<WeightedTarget> = targets.iter().map(|&t| WeightedTarget::unit(t)).collect();
        let trace = forward_exact(params[client], graph, Adjacency::IntraClient, &weighted, &fixed)?;
        let truth: Vec<usize> = trace.targets.iter().map(|t| t.label).collect();
        out.push(Some(macro_f1(&truth, &trace.predictions())));
    }
    Ok(out)
}
