//! Plain-text checkpoints.
//!
//! Line 1 is the model config as JSON. Each tensor follows as a JSON header
//! line `{"name":..,"rows":..,"cols":..}` and then one line per row of
//! comma-separated values written in shortest round-trip form, so reading a
//! checkpoint back restores every weight bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ModelError, ModelParams, ParamSet};
use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn checkpoint_to_string(params: &ModelParams) -> String {
    let mut out = serde_json::to_string(&params.config).expect("config serializes");
    out.push('\n');
    for (m, name) in params.weights.tensors().into_iter().zip(params.weights.tensor_names()) {
        let header = TensorHeader { name, rows: m.rows(), cols: m.cols() };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for r in 0..m.rows() {
            for (c, v) in m.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("writing to a string");
            }
            out.push('\n');
        }
    }
    out
}

pub fn checkpoint_from_str(text: &str) -> Result<ModelParams, CheckpointError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let parse_err = |line: usize, message: String| CheckpointError::Parse { line, message };
    let (n, first) = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint".into()))?;
    let config: ModelConfig = serde_json::from_str(first).map_err(|e| parse_err(n, e.to_string()))?;
    let mut weights = ParamSet::zeros_for(&config);
    let names = weights.tensor_names();
    for (slot, expected_name) in weights.tensors_mut().into_iter().zip(names) {
        let (n, line) = lines.next().ok_or_else(|| parse_err(n + 1, format!("missing tensor {expected_name}")))?;
        let header: TensorHeader = serde_json::from_str(line).map_err(|e| parse_err(n, e.to_string()))?;
        if header.name != expected_name {
            return Err(parse_err(n, format!("expected tensor {expected_name}, found {}", header.name)));
        }
        if (header.rows, header.cols) != slot.shape() {
            return Err(ModelError::Dimension {
                tensor: header.name,
                expected: slot.shape(),
                found: (header.rows, header.cols),
            }
            .into());
        }
        let mut data = Vec::with_capacity(header.rows * header.cols);
        for _ in 0..header.rows {
            let (n, row) = lines.next().ok_or_else(|| parse_err(n, format!("truncated tensor {expected_name}")))?;
            let values: Result<Vec<f64>, _> =
                if header.cols == 0 { Ok(Vec::new()) } else { row.split(',').map(|s| s.trim().parse::<f64>()).collect() };
            let values = values.map_err(|e| parse_err(n, e.to_string()))?;
            if values.len() != header.cols {
                return Err(parse_err(n, format!("expected {} values, found {}", header.cols, values.len())));
            }
            data.extend(values);
        }
        *slot = Matrix::from_vec(header.rows, header.cols, data);
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(n, format!("unexpected trailing content '{extra}'")));
    }
    let params = ModelParams { config, weights };
    params.validate()?;
    Ok(params)
}

pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_string(params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}
