//! `train`: run one experiment per (sweep value, repeat seed) and write
//! per-run artifacts plus a summary across seeds.
//!
//! Layout under the output directory:
//! `[<key>=<value>/]run_<seed>/{metrics,comm,releases,embeddings,privacy_report}.csv`,
//! `model.ckpt` per run, and `summary.csv` at the top.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedgnn::datagen::generate;
use fedgnn::graph::{load_graph, PartitionedGraph};
use fedgnn::metrics::mean_std;
use fedgnn::model::write_checkpoint;
use fedgnn::privacy::{privacy_report, PrivacyError, PrivacyReport, ReleaseHistory};
use fedgnn::sim::{comm_report, metrics_csv, run_experiment, ExperimentResult, SimError};

use crate::config::{ExperimentConfig, GraphSource};
use crate::{runtime, validation, write_file, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_f1: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub emb_released: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingSummary {
    /// `key=value` for a sweep point, `base` otherwise.
    pub setting: String,
    pub runs: Vec<RunSummary>,
}

pub fn load_graph_for(config: &ExperimentConfig) -> Result<PartitionedGraph, CliError> {
    match &config.graph {
        GraphSource::Files { nodes, edges, clients } => load_graph(nodes, edges, *clients).map_err(validation),
        GraphSource::Generated(spec) => {
            spec.validate().map_err(validation)?;
            generate(spec).map_err(runtime)
        }
    }
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::Config(_) => validation(e),
        other => runtime(other),
    }
}

/// Release log with external node ids.
fn releases_csv(graph: &PartitionedGraph, result: &ExperimentResult) -> String {
    let mut out = String::from("round,client,node_id\n");
    for r in &result.releases {
        writeln!(out, "{},{},{}", r.round, r.client, graph.node(r.node).id.0).unwrap();
    }
    out
}

/// Last released value per node before noise, with its release count.
pub fn embeddings_csv(graph: &PartitionedGraph, history: &ReleaseHistory) -> String {
    let dim = history.embeddings.values().next().map_or(0, Vec::len);
    let mut out = String::from("node_id,release_count");
    for j in 0..dim {
        write!(out, ",e{j}").unwrap();
    }
    out.push('\n');
    for (v, emb) in &history.embeddings {
        write!(out, "{},{}", graph.node(*v).id.0, history.counts[v]).unwrap();
        for x in emb {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn privacy_csv(config: &ExperimentConfig, history: &ReleaseHistory) -> Result<String, CliError> {
    let noise = &config.hyper.noise;
    let mut sigmas = config.privacy_sigma0.clone();
    if noise.sigma0 > 0.0 && !sigmas.contains(&noise.sigma0) {
        sigmas.push(noise.sigma0);
    }
    let report = match privacy_report(history, &sigmas, &config.privacy_percentiles, config.privacy_k, noise.delta) {
        Ok(r) => r,
        Err(PrivacyError::NoReleases | PrivacyError::TooFewPoints { .. }) => {
            log::warn!("too few released embeddings for a privacy report; writing header only");
            PrivacyReport::from_rho(&[], Vec::new(), &sigmas, 0, noise.delta, 0, 0).map_err(runtime)?
        }
        Err(e) => return Err(validation(e)),
    };
    Ok(report.to_csv())
}

/// Train once with `seed` and write every artifact into `dir`.
pub fn train_one(graph: &PartitionedGraph, config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary, CliError> {
    let mut hyper = config.hyper.clone();
    hyper.seed = seed;
    let result = run_experiment(graph, &hyper).map_err(sim_err)?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&result.metrics))?;
    write_file(&dir.join("comm.csv"), &comm_report(&result.ledger))?;
    write_file(&dir.join("releases.csv"), &releases_csv(graph, &result))?;
    write_file(&dir.join("embeddings.csv"), &embeddings_csv(graph, &result.history))?;
    write_file(&dir.join("privacy_report.csv"), &privacy_csv(config, &result.history)?)?;
    write_checkpoint(&result.params, &dir.join("model.ckpt")).map_err(runtime)?;
    let last = result.metrics.last().expect("at least one round");
    Ok(RunSummary {
        seed,
        dir: dir.to_path_buf(),
        final_f1: result.final_f1(),
        bytes_up: last.bytes_up,
        bytes_down: last.bytes_down,
        emb_released: result.releases.len(),
    })
}

/// Run every repeat of one setting. Seeds are `seed, seed + 1, ...`.
pub fn train_setting(config: &ExperimentConfig, setting: &str, dir: &Path) -> Result<SettingSummary, CliError> {
    let graph = load_graph_for(config)?;
    let mut runs = Vec::with_capacity(config.repeats);
    for i in 0..config.repeats as u64 {
        let seed = config.hyper.seed.wrapping_add(i);
        println!("{setting}: seed={seed}");
        runs.push(train_one(&graph, config, seed, &dir.join(format!("run_{seed}")))?);
    }
    Ok(SettingSummary { setting: setting.to_string(), runs })
}

pub fn summary_csv(settings: &[SettingSummary]) -> String {
    let mut out =
        String::from("setting,runs,seeds,final_f1_mean,final_f1_std,bytes_up_mean,bytes_down_mean,emb_released_mean\n");
    for s in settings {
        let f1: Vec<f64> = s.runs.iter().map(|r| r.final_f1).collect();
        let (mean, std) = mean_std(&f1);
        let avg = |f: &dyn Fn(&RunSummary) -> f64| s.runs.iter().map(f).sum::<f64>() / s.runs.len() as f64;
        let seeds: Vec<String> = s.runs.iter().map(|r| r.seed.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{mean},{std},{},{},{}",
            s.setting,
            s.runs.len(),
            seeds.join(" "),
            avg(&|r| r.bytes_up as f64),
            avg(&|r| r.bytes_down as f64),
            avg(&|r| r.emb_released as f64)
        )
        .unwrap();
    }
    out
}

/// Full `train` command. Each sweep value re-parses the config template
/// with the value appended, so sweep points share nothing else.
pub fn run_train(
    config_path: &Path,
    overrides: &[(String, String)],
    sweep: Option<(String, Vec<String>)>,
    out_dir: Option<&Path>,
) -> Result<Vec<SettingSummary>, CliError> {
    let base = ExperimentConfig::load(config_path, overrides)?;
    let root = out_dir.map_or_else(|| base.out_dir.clone(), Path::to_path_buf);
    let mut settings = Vec::new();
    match sweep {
        None => settings.push(train_setting(&base, "base", &root)?),
        Some((key, values)) => {
            if values.is_empty() {
                return Err(CliError::Validation(format!("sweep over '{key}' has no values")));
            }
            // Validate every point before training any of them.
            let mut configs = Vec::with_capacity(values.len());
            for v in &values {
                let mut o = overrides.to_vec();
                o.push((key.clone(), v.clone()));
                configs.push(ExperimentConfig::load(config_path, &o)?);
            }
            for (v, c) in values.iter().zip(&configs) {
                let setting = format!("{key}={v}");
                settings.push(train_setting(c, &setting, &root.join(&setting))?);
            }
        }
    }
    write_file(&root.join("summary.csv"), &summary_csv(&settings))?;
    Ok(settings)
}
