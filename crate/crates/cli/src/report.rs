//! `report`: aggregate every `metrics.csv` under a directory.
//!
//! Runs are grouped by the directory holding their run folder, which is
//! one group per sweep point for `train` output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedgnn::metrics::mean_std;
use walkdir::WalkDir;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct FinalRow {
    pub round: usize,
    pub final_f1: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// The last data row of a `metrics.csv`.
pub fn read_final_row(path: &Path) -> Result<FinalRow, CliError> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column '{name}'")));
    let (ri, fi, ui, di) = (col("round")?, col("mean_macro_f1")?, col("bytes_up")?, col("bytes_down")?);
    let mut last = None;
    for rec in reader.records() {
        last = Some(rec.map_err(|e| bad(e.to_string()))?);
    }
    let rec = last.ok_or_else(|| bad("no data rows".into()))?;
    let num = |i: usize| rec.get(i).unwrap_or("").to_string();
    Ok(FinalRow {
        round: num(ri).parse().map_err(|_| bad(format!("invalid round '{}'", num(ri))))?,
        final_f1: num(fi).parse().map_err(|_| bad(format!("invalid mean_macro_f1 '{}'", num(fi))))?,
        bytes_up: num(ui).parse().map_err(|_| bad(format!("invalid bytes_up '{}'", num(ui))))?,
        bytes_down: num(di).parse().map_err(|_| bad(format!("invalid bytes_down '{}'", num(di))))?,
    })
}

/// Aggregate CSV: one row per group with mean and std of the final F1.
pub fn run_report(root: &Path) -> Result<String, CliError> {
    if !root.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", root.display())));
    }
    let mut groups: BTreeMap<PathBuf, Vec<FinalRow>> = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Runtime(e.to_string()))?;
        if entry.file_name() != "metrics.csv" {
            continue;
        }
        let run_dir = entry.path().parent().unwrap_or(root);
        let group = run_dir.parent().unwrap_or(root);
        let rel = group.strip_prefix(root).unwrap_or(group).to_path_buf();
        groups.entry(rel).or_default().push(read_final_row(entry.path())?);
    }
    if groups.is_empty() {
        return Err(CliError::Validation(format!("no metrics.csv found under {}", root.display())));
    }
    let mut out = String::from("group,runs,rounds,final_f1_mean,final_f1_std,bytes_up_mean,bytes_down_mean\n");
    for (group, rows) in &groups {
        let f1: Vec<f64> = rows.iter().map(|r| r.final_f1).collect();
        let (mean, std) = mean_std(&f1);
        let n = rows.len() as f64;
        let up = rows.iter().map(|r| r.bytes_up as f64).sum::<f64>() / n;
        let down = rows.iter().map(|r| r.bytes_down as f64).sum::<f64>() / n;
        let rounds = rows.iter().map(|r| r.round).max().unwrap_or(0);
        let name = if group.as_os_str().is_empty() { ".".to_string() } else { group.display().to_string() };
        writeln!(out, "{name},{},{rounds},{mean},{std},{up},{down}", rows.len()).unwrap();
    }
    Ok(out)
}
