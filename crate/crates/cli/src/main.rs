//! `fedgnn` command-line entry point.
//!
//! Exit codes: 0 on success, 1 for validation errors, 2 for runtime
//! failures. Errors are printed to stderr as one JSON line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedgnn::datagen::GenSpec;
use fedgnn::graph::load_graph;
use fedgnn::model::read_checkpoint;
use fedgnn::privacy::AttackConfig;
use fedgnn_cli::accountant::{run_accountant, AccountantRequest, RhoSource};
use fedgnn_cli::attack::{attack_report_csv, attack_trials, median_mse};
use fedgnn_cli::config::{ExperimentConfig, GraphSource, DEFAULT_PERCENTILES};
use fedgnn_cli::gen::run_gen;
use fedgnn_cli::report::run_report;
use fedgnn_cli::train::{load_graph_for, run_train};
use fedgnn_cli::{parse_assignment, parse_list, CliError};

#[derive(Parser)]
#[command(name = "fedgnn", version, about = "Federated GNN training with cross-client embedding exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic partitioned graph as nodes.csv and edges.csv.
    Gen(GenArgs),
    /// Train from a config file, optionally sweeping one key.
    Train(TrainArgs),
    /// Compute epsilon tables for the metric-DP accountant.
    Accountant(AccountantArgs),
    /// Run the attribute inference attack against a trained model.
    Attack(AttackArgs),
    /// Aggregate metrics.csv files under a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    clients: Option<String>,
    #[arg(long)]
    feature_dim: Option<String>,
    #[arg(long)]
    density: Option<String>,
    #[arg(long)]
    pattern_count: Option<String>,
    #[arg(long)]
    pattern_length: Option<String>,
    #[arg(long)]
    illicit_ratio: Option<String>,
    #[arg(long)]
    imbalance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    p_in: Option<String>,
    #[arg(long)]
    p_out: Option<String>,
    #[arg(long)]
    feature_noise: Option<String>,
}

impl GenArgs {
    fn spec(&self) -> Result<GenSpec, CliError> {
        let mut spec = GenSpec::default();
        let fields = [
            ("generator", &self.generator),
            ("nodes", &self.nodes),
            ("clients", &self.clients),
            ("feature_dim", &self.feature_dim),
            ("density", &self.density),
            ("pattern_count", &self.pattern_count),
            ("pattern_length", &self.pattern_length),
            ("illicit_ratio", &self.illicit_ratio),
            ("imbalance", &self.imbalance),
            ("seed", &self.seed),
            ("blocks", &self.blocks),
            ("p_in", &self.p_in),
            ("p_out", &self.p_out),
            ("feature_noise", &self.feature_noise),
        ];
        for (key, value) in fields {
            if let Some(v) = value {
                spec.set(key, v).map_err(|e| CliError::Validation(format!("--{key}: {e}")))?;
            }
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set rounds=10`. Repeatable.
    #[arg(long = "set", value_parser = parse_assignment)]
    overrides: Vec<(String, String)>,
    /// Sweep one key over comma-separated values, e.g. `k_local=32,128`.
    #[arg(long, value_parser = parse_assignment)]
    sweep: Option<(String, String)>,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AccountantArgs {
    /// Comma-separated ρ values.
    #[arg(long, value_delimiter = ',', conflicts_with = "embeddings")]
    rho: Option<Vec<f64>>,
    /// CSV of released embeddings, one row per node.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_delimiter = ',')]
    percentiles: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', required = true)]
    sigma0: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    #[arg(long)]
    rounds_shared: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Experiment config naming the graph.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires = "edges", conflicts_with = "config")]
    nodes: Option<PathBuf>,
    #[arg(long, requires = "nodes")]
    edges: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-hop background fanouts, e.g. `10,3`. Repeatable.
    #[arg(long = "fanouts", required = true)]
    fanouts: Vec<String>,
    #[arg(long, default_value_t = 5)]
    targets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    repeats: u64,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value = "attack_report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    dir: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<(), CliError> {
    let spec = args.spec()?;
    println!("seed={}", spec.seed);
    println!("{}", run_gen(&spec, &args.out)?);
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let sweep = args.sweep.map(|(key, values)| (key, values.split(',').map(|v| v.trim().to_string()).collect()));
    let settings = run_train(&args.config, &args.overrides, sweep, args.out.as_deref())?;
    for s in &settings {
        for r in &s.runs {
            println!("{} seed={} final_f1={} dir={}", s.setting, r.seed, r.final_f1, r.dir.display());
        }
    }
    Ok(())
}

fn accountant(args: AccountantArgs) -> Result<(), CliError> {
    let source = match (args.rho, args.embeddings) {
        (Some(rho), None) => RhoSource::Values(rho),
        (None, Some(path)) => RhoSource::Embeddings {
            path,
            k: args.k,
            percentiles: args.percentiles.unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec()),
        },
        _ => return Err(CliError::Validation("give exactly one of --rho or --embeddings".into())),
    };
    let req = AccountantRequest { source, sigma0: args.sigma0, delta: args.delta, rounds_shared: args.rounds_shared };
    let report = run_accountant(&req)?;
    emit(args.out.as_ref(), &report.to_csv())
}

fn attack(args: AttackArgs) -> Result<(), CliError> {
    let graph = match (&args.config, &args.nodes, &args.edges) {
        (Some(path), None, None) => {
            let config = ExperimentConfig::load(path, &[])?;
            if let GraphSource::Generated(spec) = &config.graph {
                println!("graph seed={}", spec.seed);
            }
            load_graph_for(&config)?
        }
        (None, Some(n), Some(e)) => load_graph(n, e, None).map_err(|e| CliError::Validation(e.to_string()))?,
        _ => return Err(CliError::Validation("give either --config or both --nodes and --edges".into())),
    };
    let params = read_checkpoint(&args.checkpoint).map_err(|e| CliError::Validation(e.to_string()))?;
    if params.config.input_dim != graph.feature_dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {} input features, graph has {}",
            params.config.input_dim,
            graph.feature_dim()
        )));
    }
    if args.repeats == 0 || args.targets == 0 {
        return Err(CliError::Validation("--repeats and --targets must be at least 1".into()));
    }
    let fanouts = args
        .fanouts
        .iter()
        .map(|f| parse_list::<usize>(f).map_err(|e| CliError::Validation(format!("--fanouts: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds: Vec<u64> = (0..args.repeats).map(|i| args.seed.wrapping_add(i)).collect();
    println!("seed={}", args.seed);
    let config = AttackConfig { iterations: args.iterations, step: args.step, ..AttackConfig::default() };
    let rows = attack_trials(&params, &graph, &fanouts, args.targets, &seeds, &config)?;
    std::fs::write(&args.out, attack_report_csv(&graph, &rows))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    for (f, m) in fanouts.iter().zip(median_mse(&rows, &fanouts)) {
        println!("fanouts={f:?} median_mse={m}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let text = run_report(&args.dir)?;
    emit(args.out.as_ref(), &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let lines: Vec<&str> = text.lines().map(str::trim).take_while(|l| !l.is_empty()).collect();
            let err = CliError::Validation(lines.join(" "));
            eprintln!("{}", err.to_json());
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Accountant(a) => accountant(a),
        Command::Attack(a) => attack(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
