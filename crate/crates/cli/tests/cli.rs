//! End-to-end runs of the `fedgnn` binary.

use std::path::Path;
use std::process::{Command, Output};

fn fedgnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedgnn")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, format!("# small run\ngen.nodes=200\ngen.seed=3\nrounds=3\nk_local=4\nrepeats=2\nseed=7\n{extra}")).unwrap();
    path
}

#[test]
fn gen_writes_graph_files_and_prints_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["gen", "--out", "g", "--nodes", "150", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seed=4"), "{text}");
    let nodes = std::fs::read_to_string(dir.path().join("g/nodes.csv")).unwrap();
    assert!(nodes.starts_with("node_id,client_id,label,"));
    assert_eq!(nodes.lines().count(), 151);
    assert!(dir.path().join("g/edges.csv").exists());
}

#[test]
fn full_pipeline_train_attack_report_accountant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = fedgnn(&["train", "--config", cfg.to_str().unwrap(), "--out", "runs"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for seed in [7, 8] {
        let run = dir.path().join(format!("runs/run_{seed}"));
        for f in ["metrics.csv", "comm.csv", "releases.csv", "embeddings.csv", "privacy_report.csv", "model.ckpt"] {
            assert!(run.join(f).exists(), "missing {f} for seed {seed}");
        }
        let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("round,mean_macro_f1,grad_norm_sq,bytes_up,bytes_down,emb_released,wall_ms\n"));
        assert_eq!(metrics.lines().count(), 4);
    }
    let summary = std::fs::read_to_string(dir.path().join("runs/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2, "{summary}");
    assert!(summary.lines().nth(1).unwrap().starts_with("base,2,7 8,"), "{summary}");

    let o = fedgnn(
        &["attack", "--config", cfg.to_str().unwrap(), "--checkpoint", "runs/run_7/model.ckpt", "--fanouts", "3,2", "--fanouts", "10,2", "--targets", "2", "--repeats", "1", "--iterations", "50", "--out", "attack.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let attack = std::fs::read_to_string(dir.path().join("attack.csv")).unwrap();
    assert!(attack.starts_with("fanouts,seed,target_node_id,background_size,mse,objective,iterations,converged\n"));
    assert_eq!(attack.lines().count(), 1 + 2 * 2);

    let o = fedgnn(&["report", "runs"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.starts_with("group,runs,rounds,final_f1_mean,final_f1_std,bytes_up_mean,bytes_down_mean\n"));
    assert!(report.lines().nth(1).unwrap().starts_with(".,2,3,"), "{report}");

    let o = fedgnn(&["accountant", "--embeddings", "runs/run_7/embeddings.csv", "--k", "3", "--sigma0", "0.5,1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("percentile,rho,k,rounds_shared,delta,eps_sigma0_0.5,eps_sigma0_1\n"), "{table}");
    assert_eq!(table.lines().count(), 6);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = fedgnn(&["train", "--config", cfg.to_str().unwrap(), "--set", "repeats=1", "--sweep", "k_local=2,4", "--out", "sw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("sw/k_local=2/run_7/metrics.csv").exists());
    assert!(dir.path().join("sw/k_local=4/run_7/metrics.csv").exists());
    let summary = std::fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn accountant_with_explicit_rho() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["accountant", "--rho", "1", "--sigma0", "1", "--rounds-shared", "1", "--delta", "1e-5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let eps: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((eps - 4.728386984943314).abs() <= 1e-3 * 4.728386984943314, "{row}");
}

#[test]
fn validation_errors_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    for args in [
        vec!["train", "--config", cfg.to_str().unwrap(), "--set", "rounds=0"],
        vec!["train", "--config", cfg.to_str().unwrap(), "--set", "bogus=1"],
        vec!["accountant", "--rho", "1", "--sigma0", "1"],
        vec!["gen", "--out", "x", "--nodes", "many"],
        vec!["frobnicate"],
    ] {
        let o = fedgnn(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        let line = stderr(&o);
        let err = line.lines().last().unwrap();
        let v: serde_json::Value = serde_json::from_str(err).unwrap_or_else(|e| panic!("{err}: {e}"));
        assert_eq!(v["status"], "error", "{err}");
        assert_eq!(v["kind"], "validation", "{err}");
    }
}

#[test]
fn missing_input_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["train", "--config", "nope.cfg"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("\"status\":\"error\""));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedgnn(&["--help"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("accountant"));
}
