//! `gen`: write a synthetic graph as `nodes.csv` and `edges.csv`.

use std::path::Path;

use fedgnn::datagen::{client_edge_counts, generate, GenSpec};
use fedgnn::graph::write_graph;

use crate::{runtime, validation, CliError};

/// Generate a dataset into `out_dir`. Returns a one-line summary.
pub fn run_gen(spec: &GenSpec, out_dir: &Path) -> Result<String, CliError> {
    spec.validate().map_err(validation)?;
    let graph = generate(spec).map_err(runtime)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    write_graph(&graph, &out_dir.join("nodes.csv"), &out_dir.join("edges.csv")).map_err(runtime)?;
    let cross = (0..graph.num_edges()).filter(|&e| graph.is_cross_client(e)).count();
    let counts = client_edge_counts(&graph);
    Ok(format!(
        "nodes={} edges={} cross_client_edges={} client_edge_counts={:?}",
        graph.num_nodes(),
        graph.num_edges(),
        cross,
        counts
    ))
}
