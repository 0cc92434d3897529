//! Partitioned graph representation.
//!
//! Nodes are hosted by exactly one client. An edge whose endpoints live on
//! different clients is visible to both of them; both client views point at
//! the same stored edge, so the attributes they see are identical.

mod io;
mod sampling;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_graph, read_edges_csv, read_nodes_csv, write_graph};
pub use sampling::{sample_minibatch, Minibatch, SampledNode, SamplingSpec, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub usize);

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge {0:?} references unknown node {1:?}")]
    DanglingEndpoint(EdgeId, NodeId),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge id {0:?}")]
    DuplicateEdge(EdgeId),
    #[error("node {node:?} assigned to client {client} but only {num_clients} clients exist")]
    HostOutOfRange { node: NodeId, client: usize, num_clients: usize },
    #[error("node {0:?} has feature dimension {1}, expected {2}")]
    FeatureDim(NodeId, usize, usize),
    #[error("edge {0:?} has edge-feature dimension {1}, expected {2}")]
    EdgeFeatureDim(EdgeId, usize, usize),
    #[error("graph must have at least one client")]
    NoClients,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub host: ClientId,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

/// Stored edge; endpoints are dense node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

/// Which neighbors message passing may aggregate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    /// Every neighbor, regardless of host.
    Full,
    /// Only neighbors hosted by the same client.
    IntraClient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientView {
    pub client: ClientId,
    /// Hosted nodes, ascending.
    pub nodes: Vec<usize>,
    /// Edges with at least one hosted endpoint, ascending.
    pub edges: Vec<usize>,
    /// Hosted nodes with at least one neighbor hosted elsewhere, ascending.
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PartitionedGraph {
    num_clients: usize,
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
    neighbors: Vec<Vec<usize>>,
    local_neighbors: Vec<Vec<usize>>,
    remote_neighbors: Vec<Vec<usize>>,
    views: Vec<ClientView>,
    feature_dim: usize,
    edge_feature_dim: usize,
}

/// Validate records and construct per-client views.
///
/// Nodes are stored sorted by id and edges sorted by id, so dense indices
/// follow id order.
pub fn build_graph(
    mut nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    num_clients: usize,
) -> Result<PartitionedGraph, GraphError> {
    if num_clients == 0 {
        return Err(GraphError::NoClients);
    }
    nodes.sort_by_key(|n| n.id);
    let mut index = HashMap::with_capacity(nodes.len());
    let feature_dim = nodes.first().map_or(0, |n| n.features.len());
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(GraphError::DuplicateNode(n.id));
        }
        if n.host.0 >= num_clients {
            return Err(GraphError::HostOutOfRange { node: n.id, client: n.host.0, num_clients });
        }
        if n.features.len() != feature_dim {
            return Err(GraphError::FeatureDim(n.id, n.features.len(), feature_dim));
        }
    }

    let edge_feature_dim = edges.first().map_or(0, |e| e.features.len());
    let mut seen = HashSet::with_capacity(edges.len());
    let mut stored = Vec::with_capacity(edges.len());
    for e in edges {
        if !seen.insert(e.id) {
            return Err(GraphError::DuplicateEdge(e.id));
        }
        if e.features.len() != edge_feature_dim {
            return Err(GraphError::EdgeFeatureDim(e.id, e.features.len(), edge_feature_dim));
        }
        let src = *index.get(&e.src).ok_or(GraphError::DanglingEndpoint(e.id, e.src))?;
        let dst = *index.get(&e.dst).ok_or(GraphError::DanglingEndpoint(e.id, e.dst))?;
        stored.push(Edge { id: e.id, src, dst, features: e.features, label: e.label });
    }
    stored.sort_by_key(|e| e.id);

    let n = nodes.len();
    let mut neighbor_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for e in &stored {
        if e.src != e.dst {
            neighbor_sets[e.src].insert(e.dst);
            neighbor_sets[e.dst].insert(e.src);
        }
    }
    let neighbors: Vec<Vec<usize>> = neighbor_sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let host = |v: usize| nodes[v].host;
    let local_neighbors: Vec<Vec<usize>> = (0..n)
        .map(|v| neighbors[v].iter().copied().filter(|&u| host(u) == host(v)).collect())
        .collect();
    let remote_neighbors: Vec<Vec<usize>> = (0..n)
        .map(|v| neighbors[v].iter().copied().filter(|&u| host(u) != host(v)).collect())
        .collect();

    let mut views: Vec<ClientView> = (0..num_clients)
        .map(|c| ClientView { client: ClientId(c), nodes: Vec::new(), edges: Vec::new(), boundary: Vec::new() })
        .collect();
    for (v, node) in nodes.iter().enumerate() {
        let view = &mut views[node.host.0];
        view.nodes.push(v);
        if !remote_neighbors[v].is_empty() {
            view.boundary.push(v);
        }
    }
    for (i, e) in stored.iter().enumerate() {
        let (a, b) = (host(e.src).0, host(e.dst).0);
        views[a].edges.push(i);
        if b != a {
            views[b].edges.push(i);
        }
    }

    Ok(PartitionedGraph {
        num_clients,
        nodes,
        edges: stored,
        index,
        neighbors,
        local_neighbors,
        remote_neighbors,
        views,
        feature_dim,
        edge_feature_dim,
    })
}

impl PartitionedGraph {
    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_feature_dim
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &NodeRecord {
        &self.nodes[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn host(&self, v: usize) -> usize {
        self.nodes[v].host.0
    }

    pub fn features(&self, v: usize) -> &[f64] {
        &self.nodes[v].features
    }

    /// All distinct neighbors of `v`, ascending, excluding `v` itself.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Neighbors hosted by the same client as `v`.
    pub fn local_neighbors(&self, v: usize) -> &[usize] {
        &self.local_neighbors[v]
    }

    /// Neighbors hosted by a different client than `v`.
    pub fn remote_neighbors(&self, v: usize) -> &[usize] {
        &self.remote_neighbors[v]
    }

    pub fn mp_neighbors(&self, v: usize, adjacency: Adjacency) -> &[usize] {
        match adjacency {
            Adjacency::Full => self.neighbors(v),
            Adjacency::IntraClient => self.local_neighbors(v),
        }
    }

    pub fn view(&self, client: usize) -> &ClientView {
        &self.views[client]
    }

    pub fn views(&self) -> &[ClientView] {
        &self.views
    }

    pub fn is_cross_client(&self, e: usize) -> bool {
        let edge = &self.edges[e];
        self.host(edge.src) != self.host(edge.dst)
    }

    /// Clients other than the host that see `v` through a cross-client edge.
    pub fn neighbor_clients(&self, v: usize) -> BTreeSet<usize> {
        self.remote_neighbors[v].iter().map(|&u| self.host(u)).collect()
    }

    pub fn has_edge_labels(&self) -> bool {
        self.edges.iter().any(|e| e.label.is_some())
    }

    pub fn has_node_labels(&self) -> bool {
        self.nodes.iter().any(|n| n.label.is_some())
    }

    /// Records suitable for rebuilding the graph, e.g. under a new host map.
    pub fn to_records(&self) -> (Vec<NodeRecord>, Vec<EdgeRecord>) {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeRecord {
                id: e.id,
                src: self.nodes[e.src].id,
                dst: self.nodes[e.dst].id,
                features: e.features.clone(),
                label: e.label,
            })
            .collect();
        (self.nodes.clone(), edges)
    }

    /// Same nodes and edges, new host assignment (indexed by dense node index).
    pub fn with_hosts(&self, hosts: &[usize], num_clients: usize) -> Result<PartitionedGraph, GraphError> {
        let (mut nodes, edges) = self.to_records();
        for (n, &h) in nodes.iter_mut().zip(hosts) {
            n.host = ClientId(h);
        }
        build_graph(nodes, edges, num_clients)
    }
}

/// Hosted nodes of `client` with at least one neighbor hosted elsewhere.
pub fn boundary_nodes(graph: &PartitionedGraph, client: ClientId) -> BTreeSet<NodeId> {
    graph.view(client.0).boundary.iter().map(|&v| graph.node(v).id).collect()
}
