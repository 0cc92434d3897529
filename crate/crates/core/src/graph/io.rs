//! CSV graph files.
//!
//! `nodes.csv`: `node_id,client_id,label,f0,...,f{d-1}`
//! `edges.csv`: `edge_id,src,dst,label,e0,...,e{p-1}`
//!
//! A header row is required and an empty label cell means "no label".
//! Floats are written with Rust's shortest round-trip formatting.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{build_graph, ClientId, EdgeId, EdgeRecord, GraphError, NodeId, NodeRecord, PartitionedGraph};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> GraphError {
    GraphError::Parse { path: path.display().to_string(), line, message: message.into() }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GraphError {
    GraphError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn open(path: &Path, fixed: &[&str]) -> Result<(csv::Reader<File>, usize), GraphError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| io_err(path, e))?;
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    for (i, name) in fixed.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(parse_err(path, 1, format!("expected column {} to be '{}'", i, name)));
        }
    }
    Ok((reader, header.len()))
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, raw: &str, what: &str) -> Result<T, GraphError> {
    raw.trim().parse().map_err(|_| parse_err(path, line, format!("invalid {what} '{raw}'")))
}

fn label(path: &Path, line: u64, raw: &str) -> Result<Option<usize>, GraphError> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        field(path, line, raw, "label").map(Some)
    }
}

pub fn read_nodes_csv(path: &Path) -> Result<Vec<NodeRecord>, GraphError> {
    let (mut reader, width) = open(path, &["node_id", "client_id", "label"])?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(path, line, format!("ragged row: {} fields, header has {}", rec.len(), width)));
        }
        let features =
            (3..width).map(|i| field(path, line, &rec[i], "feature")).collect::<Result<Vec<f64>, _>>()?;
        out.push(NodeRecord {
            id: NodeId(field(path, line, &rec[0], "node_id")?),
            host: ClientId(field(path, line, &rec[1], "client_id")?),
            label: label(path, line, &rec[2])?,
            features,
        });
    }
    Ok(out)
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<EdgeRecord>, GraphError> {
    let (mut reader, width) = open(path, &["edge_id", "src", "dst", "label"])?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(path, line, format!("ragged row: {} fields, header has {}", rec.len(), width)));
        }
        let features =
            (4..width).map(|i| field(path, line, &rec[i], "edge feature")).collect::<Result<Vec<f64>, _>>()?;
        out.push(EdgeRecord {
            id: EdgeId(field(path, line, &rec[0], "edge_id")?),
            src: NodeId(field(path, line, &rec[1], "src")?),
            dst: NodeId(field(path, line, &rec[2], "dst")?),
            label: label(path, line, &rec[3])?,
            features,
        });
    }
    Ok(out)
}

/// Load both files. The client count defaults to `max(client_id) + 1`.
pub fn load_graph(nodes: &Path, edges: &Path, num_clients: Option<usize>) -> Result<PartitionedGraph, GraphError> {
    let node_records = read_nodes_csv(nodes)?;
    let edge_records = read_edges_csv(edges)?;
    let clients = num_clients.unwrap_or_else(|| node_records.iter().map(|n| n.host.0 + 1).max().unwrap_or(1));
    build_graph(node_records, edge_records, clients)
}

pub fn write_graph(graph: &PartitionedGraph, nodes: &Path, edges: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    out.push_str("node_id,client_id,label");
    for i in 0..graph.feature_dim() {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for n in graph.nodes() {
        out.push_str(&format!("{},{},{}", n.id.0, n.host.0, n.label.map(|l| l.to_string()).unwrap_or_default()));
        for x in &n.features {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    File::create(nodes).and_then(|mut f| f.write_all(out.as_bytes())).map_err(|e| io_err(nodes, e))?;

    let mut out = String::new();
    out.push_str("edge_id,src,dst,label");
    for i in 0..graph.edge_feature_dim() {
        out.push_str(&format!(",e{i}"));
    }
    out.push('\n');
    for e in graph.edges() {
        out.push_str(&format!(
            "{},{},{},{}",
            e.id.0,
            graph.node(e.src).id.0,
            graph.node(e.dst).id.0,
            e.label.map(|l| l.to_string()).unwrap_or_default()
        ));
        for x in &e.features {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    File::create(edges).and_then(|mut f| f.write_all(out.as_bytes())).map_err(|e| io_err(edges, e))
}
