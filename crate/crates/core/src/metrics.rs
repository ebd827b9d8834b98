//! Evaluation metrics: performance ratio against the exact solution, hit
//! count, and the diagonal-dominance measure of a covariance matrix.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::Heuristic;

/// `100 · heuristic / oracle`, both Sharpe ratios.
pub fn performance_ratio(heuristic_sharpe: f64, oracle_sharpe: f64) -> Result<f64> {
    if !(oracle_sharpe > 0.0) || !oracle_sharpe.is_finite() {
        return Err(Error::UndefinedRatio { oracle_sharpe });
    }
    if !heuristic_sharpe.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(100.0 * (heuristic_sharpe / oracle_sharpe))
}

/// Number of assets common to both supports.
pub fn hit_count(support: &[usize], oracle_support: &[usize]) -> usize {
    let oracle: HashSet<usize> = oracle_support.iter().copied().collect();
    support
        .iter()
        .copied()
        .collect::<HashSet<usize>>()
        .intersection(&oracle)
        .count()
}

/// `m_d / (m_d + m_o)` with `m_d` the mean of `|Σᵢᵢ|` and `m_o` the mean of
/// `|Σᵢⱼ|` over all `n² − n` off-diagonal cells.
pub fn diagonal_dominance(sigma: &DMatrix<f64>) -> Result<f64> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma.ncols(),
        });
    }
    if n < 2 {
        return Err(Error::Validation(format!(
            "diagonal dominance needs n >= 2, got {n}"
        )));
    }
    let mut diag = 0.0;
    let mut off = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i == j {
                diag += sigma[(i, j)].abs();
            } else {
                off += sigma[(i, j)].abs();
            }
        }
    }
    let m_d = diag / n as f64;
    let m_o = off / (n * n - n) as f64;
    if !(m_d + m_o > 0.0) {
        return Err(Error::Validation("zero matrix has no dominance".into()));
    }
    Ok(m_d / (m_d + m_o))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One heuristic-vs-oracle comparison cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance_id: String,
    pub n: usize,
    pub k: usize,
    pub heuristic: Heuristic,
    pub sharpe: Option<f64>,
    /// Relative to the exact solution; absent without an oracle.
    pub performance_pct: Option<f64>,
    pub hit_count: Option<usize>,
    pub wall_time_s: f64,
    pub oracle_exhausted: bool,
    pub jitter: f64,
    pub dominance: f64,
    pub support: Vec<usize>,
    pub warnings: Vec<String>,
    /// Set when the cell failed; all numeric fields are then absent.
    pub error: Option<String>,
}

impl BenchRecord {
    /// Hit count as a percentage of `k`.
    pub fn hit_pct(&self) -> Option<f64> {
        self.hit_count.map(|h| 100.0 * h as f64 / self.k as f64)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}
