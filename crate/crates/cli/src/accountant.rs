//! `accountant`: ε tables from an explicit ρ or from released embeddings.

use std::path::Path;

use fedgnn::privacy::{rho_percentiles, PrivacyReport};

use crate::{validation, CliError};

#[derive(Debug, Clone, PartialEq)]
pub enum RhoSource {
    Values(Vec<f64>),
    /// Embeddings CSV plus the k of the k-th nearest neighbor distance and
    /// the percentiles to report.
    Embeddings { path: std::path::PathBuf, k: usize, percentiles: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountantRequest {
    pub source: RhoSource,
    pub sigma0: Vec<f64>,
    pub delta: f64,
    /// Falls back to the largest `release_count` in the embeddings file.
    pub rounds_shared: Option<u64>,
}

/// Embedding rows and the largest release count, if the file has one.
///
/// Accepts a header row. Columns named `node_id` and `release_count` are
/// metadata; every other column is an embedding coordinate.
pub fn read_embeddings(path: &Path) -> Result<(Vec<Vec<f64>>, Option<u64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut skip = Vec::new();
    let mut count_col = None;
    let mut max_count: Option<u64> = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = i + 1;
        if i == 0 && rec.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            for (j, name) in rec.iter().enumerate() {
                match name.trim() {
                    "node_id" => skip.push(j),
                    "release_count" => {
                        skip.push(j);
                        count_col = Some(j);
                    }
                    _ => {}
                }
            }
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == count_col {
                let c: u64 = cell.trim().parse().map_err(|_| {
                    CliError::Validation(format!("{}:{line}: invalid release_count '{cell}'", path.display()))
                })?;
                max_count = Some(max_count.map_or(c, |m| m.max(c)));
            }
            if skip.contains(&j) {
                continue;
            }
            let x: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("{}:{line}: invalid value '{cell}'", path.display())))?;
            row.push(x);
        }
        rows.push(row);
    }
    Ok((rows, max_count))
}

pub fn run_accountant(req: &AccountantRequest) -> Result<PrivacyReport, CliError> {
    if req.sigma0.is_empty() {
        return Err(CliError::Validation("at least one --sigma0 value is required".into()));
    }
    match &req.source {
        RhoSource::Values(rho) => {
            let rounds = req
                .rounds_shared
                .ok_or_else(|| CliError::Validation("--rounds-shared is required with --rho".into()))?;
            let percentiles = vec![f64::NAN; rho.len()];
            PrivacyReport::from_rho(&percentiles, rho.clone(), &req.sigma0, rounds, req.delta, 0, 0).map_err(validation)
        }
        RhoSource::Embeddings { path, k, percentiles } => {
            let (points, max_count) = read_embeddings(path)?;
            let rounds = req.rounds_shared.or(max_count).ok_or_else(|| {
                CliError::Validation("--rounds-shared is required when the file has no release_count column".into())
            })?;
            let usable = points.iter().filter(|p| p.iter().any(|v| *v != 0.0)).count();
            if usable < 2 {
                return Err(CliError::Validation(format!("need at least 2 non-zero embeddings, found {usable}")));
            }
            let k = (*k).clamp(1, usable - 1);
            let rho = rho_percentiles(&points, k, percentiles).map_err(validation)?;
            PrivacyReport::from_rho(percentiles, rho, &req.sigma0, rounds, req.delta, k, usable).map_err(validation)
        }
    }
}
