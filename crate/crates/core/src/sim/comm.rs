//! Communication accounting.
//!
//! A dense tensor costs `elements × 8` bytes plus a 16-byte shape header.
//! An embedding costs `dim × 8` bytes plus an 8-byte node id.

use std::fmt::Write as _;

use crate::model::ParamSet;

pub const TENSOR_HEADER_BYTES: u64 = 16;
pub const EMBEDDING_HEADER_BYTES: u64 = 8;

pub fn tensor_set_bytes(set: &ParamSet) -> u64 {
    set.tensors().iter().map(|m| m.len() as u64 * 8 + TENSOR_HEADER_BYTES).sum()
}

pub fn embedding_bytes(dim: usize) -> u64 {
    dim as u64 * 8 + EMBEDDING_HEADER_BYTES
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundComm {
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Parameter and gradient-estimator bytes, both directions.
    pub model_bytes: u64,
    /// Embedding bytes, both directions.
    pub embedding_bytes: u64,
    /// Embeddings uploaded by clients.
    pub embeddings_up: u64,
    /// Embedding copies delivered to clients.
    pub embeddings_down: u64,
    pub tensors_sent: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    pub rounds: Vec<RoundComm>,
}

impl CommLedger {
    pub fn push(&mut self, r: RoundComm) {
        self.rounds.push(r);
    }

    pub fn totals(&self) -> RoundComm {
        self.rounds.iter().fold(RoundComm::default(), |a, r| RoundComm {
            bytes_up: a.bytes_up + r.bytes_up,
            bytes_down: a.bytes_down + r.bytes_down,
            model_bytes: a.model_bytes + r.model_bytes,
            embedding_bytes: a.embedding_bytes + r.embedding_bytes,
            embeddings_up: a.embeddings_up + r.embeddings_up,
            embeddings_down: a.embeddings_down + r.embeddings_down,
            tensors_sent: a.tensors_sent + r.tensors_sent,
        })
    }

    /// Cumulative `(bytes_up, bytes_down)` after each round.
    pub fn cumulative(&self) -> Vec<(u64, u64)> {
        let mut up = 0;
        let mut down = 0;
        self.rounds
            .iter()
            .map(|r| {
                up += r.bytes_up;
                down += r.bytes_down;
                (up, down)
            })
            .collect()
    }
}

/// Per-round series followed by a `total` row.
pub fn comm_report(ledger: &CommLedger) -> String {
    let mut out =
        String::from("round,bytes_up,bytes_down,model_bytes,embedding_bytes,embeddings_up,embeddings_down,tensors_sent\n");
    let row = |out: &mut String, label: &str, r: &RoundComm| {
        writeln!(
            out,
            "{label},{},{},{},{},{},{},{}",
            r.bytes_up, r.bytes_down, r.model_bytes, r.embedding_bytes, r.embeddings_up, r.embeddings_down, r.tensors_sent
        )
        .unwrap();
    };
    for (i, r) in ledger.rounds.iter().enumerate() {
        row(&mut out, &(i + 1).to_string(), r);
    }
    row(&mut out, "total", &ledger.totals());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_reports_zero() {
        let l = CommLedger::default();
        assert_eq!(l.totals(), RoundComm::default());
        assert!(comm_report(&l).ends_with("total,0,0,0,0,0,0,0\n"));
    }
}
