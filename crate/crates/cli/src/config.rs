//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys prefixed with
//! `gen.` describe a generated graph inline; otherwise `nodes` and `edges`
//! name CSV files, resolved relative to the config file's directory.

use std::path::{Path, PathBuf};

use fedgnn::datagen::GenSpec;
use fedgnn::model::TaskKind;
use fedgnn::sim::Hyperparams;

use crate::CliError;

pub const DEFAULT_PRIVACY_SIGMA0: &[f64] = &[0.3, 0.5, 0.7, 1.0, 2.0, 3.0, 5.0];
pub const DEFAULT_PERCENTILES: &[f64] = &[50.0, 90.0, 95.0, 99.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Files { nodes: PathBuf, edges: PathBuf, clients: Option<usize> },
    Generated(GenSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub hyper: Hyperparams,
    pub repeats: usize,
    pub out_dir: PathBuf,
    pub privacy_k: usize,
    pub privacy_percentiles: Vec<f64>,
    pub privacy_sigma0: Vec<f64>,
}

fn list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

fn scalar<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("'{value}': {e}"))
}

fn boolean(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

/// Split text into `(line number, key, value)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parse config text. `base` resolves relative paths; `overrides` are
    /// applied after the file as if appended to it.
    pub fn parse(text: &str, base: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut pairs = parse_pairs(text)?;
        pairs.extend(overrides.iter().map(|(k, v)| (0, k.clone(), v.clone())));

        let mut hyper = Hyperparams::default();
        let mut gen = GenSpec::default();
        let mut gen_used = false;
        let mut nodes = None;
        let mut edges = None;
        let mut clients = None;
        let mut repeats = 3;
        let mut out_dir = PathBuf::from("runs");
        let mut privacy_k = 50;
        let mut privacy_percentiles = DEFAULT_PERCENTILES.to_vec();
        let mut privacy_sigma0 = DEFAULT_PRIVACY_SIGMA0.to_vec();

        for (line, key, value) in pairs {
            let at = |e: String| {
                let place = if line == 0 { "override".to_string() } else { format!("line {line}") };
                CliError::Validation(format!("{place}: key '{key}': {e}"))
            };
            let v = value.as_str();
            if let Some(gkey) = key.strip_prefix("gen.") {
                gen.set(gkey, v).map_err(at)?;
                gen_used = true;
                continue;
            }
            match key.as_str() {
                "rounds" => hyper.rounds = scalar(v).map_err(at)?,
                "k_local" => hyper.k_local = scalar(v).map_err(at)?,
                "lr" => hyper.lr = scalar(v).map_err(at)?,
                "gamma" => hyper.gamma = scalar(v).map_err(at)?,
                "beta" => hyper.beta = scalar(v).map_err(at)?,
                "batch_size" => hyper.batch_size = scalar(v).map_err(at)?,
                "fanouts" => hyper.fanouts = list(v).map_err(at)?,
                "hidden" => hyper.model.hidden = list(v).map_err(at)?,
                "arch" => hyper.model.arch = scalar(v).map_err(at)?,
                "activation" => hyper.model.activation = scalar(v).map_err(at)?,
                "gin_eps" => hyper.model.gin_eps = scalar(v).map_err(at)?,
                "algorithm" => hyper.algorithm = scalar(v).map_err(at)?,
                "seed" => hyper.seed = scalar(v).map_err(at)?,
                "repeats" => repeats = scalar(v).map_err(at)?,
                "sigma0" => hyper.noise.sigma0 = scalar(v).map_err(at)?,
                "sigma1" => hyper.noise.sigma1 = scalar(v).map_err(at)?,
                "sigma2" => hyper.noise.sigma2 = scalar(v).map_err(at)?,
                "clip_embed" => hyper.noise.clip_embed = scalar(v).map_err(at)?,
                "clip_model" => hyper.noise.clip_model = scalar(v).map_err(at)?,
                "delta" => hyper.noise.delta = scalar(v).map_err(at)?,
                "privacy_k" => privacy_k = scalar(v).map_err(at)?,
                "privacy_percentiles" => privacy_percentiles = list(v).map_err(at)?,
                "privacy_sigma0" => privacy_sigma0 = list(v).map_err(at)?,
                "nodes" => nodes = Some(base.join(v)),
                "edges" => edges = Some(base.join(v)),
                "clients" => clients = Some(scalar(v).map_err(at)?),
                "out_dir" => out_dir = base.join(v),
                "parallel" => hyper.parallel = boolean(v).map_err(at)?,
                "class_weighting" => hyper.class_weighting = scalar(v).map_err(at)?,
                "remote_mode" => hyper.remote_mode = scalar(v).map_err(at)?,
                "wall_clock" => hyper.wall_clock = boolean(v).map_err(at)?,
                "eval_every" => hyper.eval_every = scalar(v).map_err(at)?,
                "grad_norm" => hyper.grad_norm = boolean(v).map_err(at)?,
                "split" => hyper.split = Some(scalar(v).map_err(at)?),
                "task" => {
                    hyper.task = match v {
                        "edge" => Some(TaskKind::Edge),
                        "node" => Some(TaskKind::Node),
                        "auto" => None,
                        other => return Err(at(format!("unknown task '{other}'"))),
                    }
                }
                _ => return Err(at("unknown key".into())),
            }
        }

        let graph = match (nodes, edges, gen_used) {
            (Some(nodes), Some(edges), false) => GraphSource::Files { nodes, edges, clients },
            (None, None, true) => {
                if let Some(c) = clients {
                    gen.clients = c;
                }
                GraphSource::Generated(gen)
            }
            (None, None, false) => {
                return Err(CliError::Validation("config needs either nodes= and edges= or gen.* keys".into()))
            }
            (_, _, true) => return Err(CliError::Validation("use either CSV paths or gen.* keys, not both".into())),
            _ => return Err(CliError::Validation("nodes= and edges= must be given together".into())),
        };
        if repeats == 0 {
            return Err(CliError::Validation("repeats must be at least 1".into()));
        }
        hyper.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(ExperimentConfig { graph, hyper, repeats, out_dir, privacy_k, privacy_percentiles, privacy_sigma0 })
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, overrides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_generated_graph_config() {
        let text = "# toy\nrounds=5\nk_local = 4\nfanouts=3,3\ngen.nodes=100\ngen.generator=planted_cycles\nalgorithm=fedavg\n";
        let c = ExperimentConfig::parse(text, Path::new("/tmp"), &[]).unwrap();
        assert_eq!(c.hyper.rounds, 5);
        assert_eq!(c.hyper.fanouts, vec![3, 3]);
        match c.graph {
            GraphSource::Generated(g) => assert_eq!(g.nodes, 100),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_line() {
        let err = ExperimentConfig::parse("rounds=5\nbogus=1\n", Path::new("."), &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn zero_rounds_rejected() {
        let err = ExperimentConfig::parse("rounds=0\ngen.nodes=50\n", Path::new("."), &[]).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
    }

    #[test]
    fn paths_resolve_against_base() {
        let c = ExperimentConfig::parse("nodes=n.csv\nedges=e.csv\n", Path::new("/data"), &[]).unwrap();
        assert_eq!(c.graph, GraphSource::Files { nodes: "/data/n.csv".into(), edges: "/data/e.csv".into(), clients: None });
    }
}
