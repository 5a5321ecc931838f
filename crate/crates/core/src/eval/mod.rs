//! Retrieval metrics and the experiment matrix.

mod matrix;
mod report;

pub use matrix::{default_cells, run_matrix, EvalQueries, MatrixCell, MatrixOptions};
pub use report::{EvalMode, ExperimentReport, ReportRow};

use crate::error::{Error, Result};

/// Fraction of queries whose top-1 prediction equals the gold document.
pub fn accuracy(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), gold.len())?;
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Fraction of queries whose gold document is among the first `k` results.
pub fn hits_at_k(rankings: &[Vec<usize>], gold: &[usize], k: usize) -> Result<f64> {
    check_lengths(rankings.len(), gold.len())?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let hits = rankings
        .iter()
        .zip(gold)
        .filter(|(r, g)| r.iter().take(k).any(|d| d == *g))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}
