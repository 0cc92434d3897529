//! Seeded synthetic graphs and client partitioners.
//!
//! `PlantedCycles` builds a transaction graph with directed cycles of
//! high-value transfers planted across clients; the edge task is to flag the
//! cycle edges. `SbmNodes` builds a stochastic block model whose node labels
//! are the block ids.

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::graph::{build_graph, ClientId, EdgeId, EdgeRecord, GraphError, NodeId, NodeRecord, PartitionedGraph};
use crate::rng::{stream, Purpose};

/// Edge log-amount above which a transfer counts as high value.
pub const HIGH_VALUE: f64 = 8.0;
const CYCLE_AMOUNT: (f64, f64) = (9.0, 0.3);
const BACKGROUND_AMOUNT: (f64, f64) = (5.0, 1.0);
/// Node features with a fixed meaning; later dimensions are pure noise.
pub const PLANTED_INFORMATIVE_DIMS: usize = 6;
const PARTITION_RETRIES: usize = 20;
const PARTITION_TOLERANCE: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum DatagenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    PlantedCycles,
    SbmNodes,
}

impl FromStr for Generator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "planted_cycles" | "cycles" => Ok(Generator::PlantedCycles),
            "sbm_nodes" | "sbm" => Ok(Generator::SbmNodes),
            other => Err(format!("unknown generator '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub generator: Generator,
    pub nodes: usize,
    pub clients: usize,
    pub feature_dim: usize,
    /// Background edges as a fraction of the `n(n-1)` ordered pairs.
    pub density: f64,
    /// Number of planted cycles; derived from `illicit_ratio` when `None`.
    pub pattern_count: Option<usize>,
    pub pattern_length: usize,
    /// Target fraction of edges that belong to planted cycles.
    pub illicit_ratio: f64,
    /// Target ratio of the largest to the smallest per-client edge count.
    pub imbalance: f64,
    pub seed: u64,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Std of the Gaussian noise added to node features.
    pub feature_noise: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            generator: Generator::PlantedCycles,
            nodes: 1000,
            clients: 4,
            feature_dim: 8,
            density: 0.002,
            pattern_count: None,
            pattern_length: 4,
            illicit_ratio: 0.1,
            imbalance: 1.0,
            seed: 0,
            blocks: 3,
            p_in: 0.02,
            p_out: 0.002,
            feature_noise: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| format!("{key}: {e}"))
}

impl GenSpec {
    pub const KEYS: &'static [&'static str] = &[
        "generator",
        "nodes",
        "clients",
        "feature_dim",
        "density",
        "pattern_count",
        "pattern_length",
        "illicit_ratio",
        "imbalance",
        "seed",
        "blocks",
        "p_in",
        "p_out",
        "feature_noise",
    ];

    /// Set one field from its textual form. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "generator" => self.generator = parse(key, value)?,
            "nodes" => self.nodes = parse(key, value)?,
            "clients" => self.clients = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "density" => self.density = parse(key, value)?,
            "pattern_count" => {
                self.pattern_count = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "pattern_length" => self.pattern_length = parse(key, value)?,
            "illicit_ratio" => self.illicit_ratio = parse(key, value)?,
            "imbalance" => self.imbalance = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "blocks" => self.blocks = parse(key, value)?,
            "p_in" => self.p_in = parse(key, value)?,
            "p_out" => self.p_out = parse(key, value)?,
            "feature_noise" => self.feature_noise = parse(key, value)?,
            other => return Err(format!("unknown generator key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidSpec(m));
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        if self.nodes < self.clients {
            return bad(format!("nodes ({}) must be at least clients ({})", self.nodes, self.clients));
        }
        if !(self.imbalance >= 1.0 && self.imbalance.is_finite()) {
            return bad(format!("imbalance must be >= 1, got {}", self.imbalance));
        }
        if !(self.feature_noise >= 0.0) {
            return bad(format!("feature_noise must be >= 0, got {}", self.feature_noise));
        }
        match self.generator {
            Generator::PlantedCycles => {
                if self.pattern_length < 3 {
                    return bad(format!("pattern_length must be at least 3, got {}", self.pattern_length));
                }
                if !(self.illicit_ratio > 0.0 && self.illicit_ratio <= 0.5) {
                    return bad(format!("illicit_ratio must lie in (0, 0.5], got {}", self.illicit_ratio));
                }
                if !(self.density >= 0.0 && self.density < 1.0) {
                    return bad(format!("density must lie in [0, 1), got {}", self.density));
                }
                if self.feature_dim < PLANTED_INFORMATIVE_DIMS {
                    return bad(format!("feature_dim must be at least {PLANTED_INFORMATIVE_DIMS}"));
                }
            }
            Generator::SbmNodes => {
                if self.blocks < 2 {
                    return bad(format!("blocks must be at least 2, got {}", self.blocks));
                }
                for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
                    if !(0.0..=1.0).contains(&p) {
                        return bad(format!("{name} must lie in [0, 1], got {p}"));
                    }
                }
                if self.feature_dim == 0 {
                    return bad("feature_dim must be positive".into());
                }
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &GenSpec) -> Result<PartitionedGraph, DatagenError> {
    match spec.generator {
        Generator::PlantedCycles => gen_planted_cycles(spec),
        Generator::SbmNodes => gen_sbm_nodes(spec),
    }
}

/// Background transaction edges plus planted directed cycles of high-value
/// transfers. Cycle edges are labeled 1, everything else 0.
///
/// Cycle members ("mules") are disjoint. Background edges never join two
/// mules, so an edge between two mules is always a cycle edge. Every cycle
/// spans at least two clients. Edge features are `[log_amount, time]`; edge
/// ids follow time order. Node features are
/// `[1, log1p(degree), high-value out count, high-value in count,
/// mean out log-amount / 10, mean in log-amount / 10, noise...]` with Gaussian
/// noise of scale `feature_noise` on all but the constant.
pub fn gen_planted_cycles(spec: &GenSpec) -> Result<PartitionedGraph, DatagenError> {
    spec.validate()?;
    let n = spec.nodes;
    let len = spec.pattern_length;
    let pairs = n as f64 * (n as f64 - 1.0);
    let background = (spec.density * pairs).round() as usize;
    let patterns = spec.pattern_count.unwrap_or_else(|| {
        let r = spec.illicit_ratio;
        (r * background as f64 / ((1.0 - r) * len as f64)).round() as usize
    });
    if patterns > 0 && spec.clients < 2 {
        return Err(DatagenError::Infeasible("planted cycles must span two clients; need at least 2".into()));
    }
    let mules = patterns * len;
    if mules > n {
        return Err(DatagenError::Infeasible(format!("{patterns} cycles of length {len} need {mules} nodes, only {n} exist")));
    }
    let allowed_pairs = pairs - mules as f64 * (mules as f64 - 1.0);
    if background as f64 > 0.5 * allowed_pairs {
        return Err(DatagenError::Infeasible(format!("density too high: {background} background edges requested")));
    }

    let mut rng = stream(spec.seed, Purpose::Generate, 0, 0, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut is_mule = vec![false; n];
    let cycles: Vec<Vec<usize>> = order[..mules].chunks(len).map(<[usize]>::to_vec).collect();
    for &v in &order[..mules] {
        is_mule[v] = true;
    }

    let bg_amount = Normal::new(BACKGROUND_AMOUNT.0, BACKGROUND_AMOUNT.1).expect("valid normal");
    let cycle_amount = Normal::new(CYCLE_AMOUNT.0, CYCLE_AMOUNT.1).expect("valid normal");
    // (src, dst, log_amount, time, label)
    let mut raw: Vec<(usize, usize, f64, f64, usize)> = Vec::with_capacity(background + mules);
    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(background + mules);
    for cycle in &cycles {
        for i in 0..len {
            let (u, v) = (cycle[i], cycle[(i + 1) % len]);
            used.insert((u.min(v), u.max(v)));
            raw.push((u, v, cycle_amount.sample(&mut rng), rng.random::<f64>(), 1));
        }
    }
    let mut added = 0;
    while added < background {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v || (is_mule[u] && is_mule[v]) || !used.insert((u.min(v), u.max(v))) {
            continue;
        }
        raw.push((u, v, bg_amount.sample(&mut rng), rng.random::<f64>(), 0));
        added += 1;
    }
    raw.sort_by(|a, b| a.3.total_cmp(&b.3));

    let mut degree = vec![0usize; n];
    let mut hv_out = vec![0usize; n];
    let mut hv_in = vec![0usize; n];
    let mut out_sum = vec![(0.0, 0usize); n];
    let mut in_sum = vec![(0.0, 0usize); n];
    for &(u, v, amount, _, _) in &raw {
        degree[u] += 1;
        degree[v] += 1;
        out_sum[u].0 += amount;
        out_sum[u].1 += 1;
        in_sum[v].0 += amount;
        in_sum[v].1 += 1;
        if amount > HIGH_VALUE {
            hv_out[u] += 1;
            hv_in[v] += 1;
        }
    }
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mean = |(s, c): (f64, usize)| if c == 0 { 0.0 } else { s / c as f64 };
    let nodes: Vec<NodeRecord> = (0..n)
        .map(|v| {
            let mut f = vec![0.0; spec.feature_dim];
            f[1] = (degree[v] as f64).ln_1p();
            f[2] = hv_out[v] as f64;
            f[3] = hv_in[v] as f64;
            f[4] = mean(out_sum[v]) / 10.0;
            f[5] = mean(in_sum[v]) / 10.0;
            for x in f.iter_mut().skip(1) {
                *x += spec.feature_noise * noise.sample(&mut rng);
            }
            f[0] = 1.0;
            NodeRecord { id: NodeId(v as u64), host: ClientId(0), features: f, label: Some(usize::from(is_mule[v])) }
        })
        .collect();
    let edges: Vec<EdgeRecord> = raw
        .iter()
        .enumerate()
        .map(|(i, &(u, v, amount, time, label))| EdgeRecord {
            id: EdgeId(i as u64),
            src: NodeId(u as u64),
            dst: NodeId(v as u64),
            features: vec![amount, time],
            label: Some(label),
        })
        .collect();
    let unassigned = build_graph(nodes, edges, 1)?;
    let partitioned = partition(&unassigned, spec.clients, spec.imbalance, spec.seed)?;

    let mut hosts: Vec<usize> = (0..n).map(|v| partitioned.host(v)).collect();
    for cycle in &cycles {
        let first = hosts[cycle[0]];
        if cycle.iter().all(|&v| hosts[v] == first) {
            hosts[cycle[0]] = (first + 1) % spec.clients;
        }
    }
    Ok(partitioned.with_hosts(&hosts, spec.clients)?)
}

/// Stochastic block model: node `v` sits in block `v mod blocks`, which is
/// also its label. Each unordered pair is joined with probability `p_in`
/// within a block and `p_out` across blocks. Features are a per-block mean
/// (standard normal draws) plus `feature_noise` Gaussian noise.
pub fn gen_sbm_nodes(spec: &GenSpec) -> Result<PartitionedGraph, DatagenError> {
    spec.validate()?;
    let n = spec.nodes;
    let mut rng = stream(spec.seed, Purpose::Generate, 1, 0, 0);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let means: Vec<Vec<f64>> =
        (0..spec.blocks).map(|_| (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect()).collect();
    let block = |v: usize| v % spec.blocks;
    let nodes: Vec<NodeRecord> = (0..n)
        .map(|v| {
            let features = means[block(v)].iter().map(|m| m + spec.feature_noise * normal.sample(&mut rng)).collect();
            NodeRecord { id: NodeId(v as u64), host: ClientId(0), features, label: Some(block(v)) }
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                let id = EdgeId(edges.len() as u64);
                edges.push(EdgeRecord { id, src: NodeId(u as u64), dst: NodeId(v as u64), features: Vec::new(), label: None });
            }
        }
    }
    let unassigned = build_graph(nodes, edges, 1)?;
    partition(&unassigned, spec.clients, spec.imbalance, spec.seed)
}

/// Per-client count of edges with at least one hosted endpoint.
pub fn client_edge_counts(graph: &PartitionedGraph) -> Vec<usize> {
    graph.views().iter().map(|v| v.edges.len()).collect()
}

fn imbalance_of(counts: &[usize]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    let min = counts.iter().copied().min().unwrap_or(0) as f64;
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Assign nodes to `num_clients` hosts so that the largest over smallest
/// per-client edge count is close to `imbalance`.
///
/// Client `i` gets a target share proportional to `imbalance^(i/(N-1))`.
/// Nodes are drawn into clients by weight; weights are then corrected by the
/// ratio of target to realized edge counts and the draw repeated, up to a
/// fixed number of attempts. The closest attempt is kept, with a warning if
/// it misses the target by more than 15%.
pub fn partition(graph: &PartitionedGraph, num_clients: usize, imbalance: f64, seed: u64) -> Result<PartitionedGraph, DatagenError> {
    if num_clients == 0 {
        return Err(DatagenError::InvalidSpec("clients must be at least 1".into()));
    }
    if graph.num_nodes() < num_clients {
        return Err(DatagenError::InvalidSpec(format!(
            "cannot split {} nodes across {num_clients} clients",
            graph.num_nodes()
        )));
    }
    if !(imbalance >= 1.0) {
        return Err(DatagenError::InvalidSpec(format!("imbalance must be >= 1, got {imbalance}")));
    }
    if num_clients == 1 {
        return Ok(graph.with_hosts(&vec![0; graph.num_nodes()], 1)?);
    }
    let targets: Vec<f64> =
        (0..num_clients).map(|i| imbalance.powf(i as f64 / (num_clients - 1) as f64)).collect();
    let mut weights = targets.clone();
    let mut best: Option<(f64, PartitionedGraph)> = None;
    for attempt in 0..PARTITION_RETRIES {
        let mut rng = stream(seed, Purpose::Partition, attempt as u64, 0, 0);
        let hosts = draw_hosts(graph.num_nodes(), &weights, &mut rng);
        let candidate = graph.with_hosts(&hosts, num_clients)?;
        let counts = client_edge_counts(&candidate);
        let realized = imbalance_of(&counts);
        let miss = (realized / imbalance - 1.0).abs();
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, candidate));
        }
        if miss <= PARTITION_TOLERANCE / 3.0 {
            break;
        }
        let total: usize = counts.iter().sum();
        let tsum: f64 = targets.iter().sum();
        for i in 0..num_clients {
            let want = targets[i] / tsum * total as f64;
            let got = counts[i].max(1) as f64;
            weights[i] *= (want / got).sqrt();
        }
    }
    let (miss, graph) = best.expect("at least one attempt");
    if miss > PARTITION_TOLERANCE {
        log::warn!("partition missed imbalance target {imbalance} by {:.1}%", miss * 100.0);
    }
    Ok(graph)
}

/// Host per node: every client gets one node first, the rest are drawn by weight.
fn draw_hosts<R: Rng + ?Sized>(n: usize, weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let total: f64 = weights.iter().sum();
    let mut hosts = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        hosts[v] = if i < weights.len() {
            i
        } else {
            let mut x = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (c, w) in weights.iter().enumerate() {
                if x < *w {
                    pick = c;
                    break;
                }
                x -= w;
            }
            pick
        };
    }
    hosts
}

/// Node sets of the planted cycles, recovered from label-1 edges.
pub fn planted_cycle_components(graph: &PartitionedGraph) -> Vec<BTreeSet<usize>> {
    let n = graph.num_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut x = x;
        while p[x] != r {
            let next = p[x];
            p[x] = r;
            x = next;
        }
        r
    }
    let mut members = BTreeSet::new();
    for e in graph.edges().iter().filter(|e| e.label == Some(1)) {
        members.insert(e.src);
        members.insert(e.dst);
        let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
        parent[a] = b;
    }
    let mut groups: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    for v in members {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().insert(v);
    }
    groups.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenSpec {
        GenSpec { nodes: 200, clients: 3, density: 0.01, seed: 3, ..GenSpec::default() }
    }

    #[test]
    fn zero_patterns_all_background() {
        let g = gen_planted_cycles(&GenSpec { pattern_count: Some(0), ..small() }).unwrap();
        assert!(g.edges().iter().all(|e| e.label == Some(0)));
    }

    #[test]
    fn cycles_span_clients() {
        let g = gen_planted_cycles(&small()).unwrap();
        let comps = planted_cycle_components(&g);
        assert!(!comps.is_empty());
        for c in comps {
            let hosts: BTreeSet<usize> = c.iter().map(|&v| g.host(v)).collect();
            assert!(hosts.len() >= 2);
        }
    }

    #[test]
    fn edge_ids_follow_time() {
        let g = gen_planted_cycles(&small()).unwrap();
        assert!(g.edges().windows(2).all(|w| w[0].features[1] <= w[1].features[1]));
    }

    #[test]
    fn single_client_with_patterns_is_infeasible() {
        let spec = GenSpec { clients: 1, ..small() };
        assert!(matches!(gen_planted_cycles(&spec), Err(DatagenError::Infeasible(_))));
    }

    #[test]
    fn oversized_patterns_are_infeasible() {
        let spec = GenSpec { pattern_count: Some(30), pattern_length: 10, ..small() };
        assert!(matches!(gen_planted_cycles(&spec), Err(DatagenError::Infeasible(_))));
    }

    #[test]
    fn sbm_zero_noise_constant_per_block() {
        let spec = GenSpec { generator: Generator::SbmNodes, nodes: 30, feature_noise: 0.0, ..small() };
        let g = gen_sbm_nodes(&spec).unwrap();
        for v in 0..30 {
            assert_eq!(g.features(v), g.features(v % spec.blocks));
        }
    }

    #[test]
    fn set_rejects_unknown_keys() {
        let mut s = GenSpec::default();
        s.set("nodes", "50").unwrap();
        assert_eq!(s.nodes, 50);
        s.set("pattern_count", "auto").unwrap();
        assert_eq!(s.pattern_count, None);
        assert!(s.set("colour", "red").is_err());
    }
}
