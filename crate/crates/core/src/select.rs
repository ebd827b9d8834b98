//! Cardinality-constrained asset selection.
//!
//! Every heuristic here follows the same pattern: pick a support of at most
//! `k` assets, then re-solve the tangent problem on the principal
//! sub-instance and embed the result back into an `n`-vector.
//!
//! * [`select_oscar`] ranks assets by `|Lᵀŵ|`, where `ŵ` is the full tangent
//!   portfolio and `Σ = L·Lᵀ`. The ranking does not depend on `k`, so any
//!   cardinality is served by a prefix of one [`SelectionOrder`].
//! * [`select_topk_sharpe`] ranks by the stand-alone ratio `μᵢ/√Σᵢᵢ`.
//! * [`select_topk_weight`] ranks by `|ŵᵢ|`.
//! * [`select_forward`] repeatedly solves on the not-yet-picked assets and
//!   takes the largest absolute weight.
//! * [`select_backward`] repeatedly solves on the survivors and drops the
//!   smallest absolute weight.
//!
//! Ties are always broken towards the smaller asset index.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MomentEstimate;
use crate::spd::{cholesky, principal_submatrix, subvector, transform_by_lt};
use crate::tangent::{sharpe_raw, solve_tangent, tangent_direction, tangent_with_factor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heuristic {
    #[serde(rename = "OSCAR")]
    Oscar,
    #[serde(rename = "SR")]
    TopSharpe,
    #[serde(rename = "W")]
    TopWeight,
    #[serde(rename = "F")]
    Forward,
    #[serde(rename = "B")]
    Backward,
    #[serde(rename = "EXACT")]
    Exact,
}

impl Heuristic {
    /// The five selection heuristics, in report order.
    pub const SELECTORS: [Heuristic; 5] = [
        Heuristic::TopSharpe,
        Heuristic::TopWeight,
        Heuristic::Forward,
        Heuristic::Backward,
        Heuristic::Oscar,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Heuristic::Oscar => "OSCAR",
            Heuristic::TopSharpe => "SR",
            Heuristic::TopWeight => "W",
            Heuristic::Forward => "F",
            Heuristic::Backward => "B",
            Heuristic::Exact => "EXACT",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "OSCAR" => Ok(Heuristic::Oscar),
            "SR" => Ok(Heuristic::TopSharpe),
            "W" => Ok(Heuristic::TopWeight),
            "F" => Ok(Heuristic::Forward),
            "B" => Ok(Heuristic::Backward),
            "EXACT" => Ok(Heuristic::Exact),
            other => Err(format!(
                "unknown heuristic {other:?} (expected OSCAR, SR, W, F, B or EXACT)"
            )),
        }
    }
}

/// A ranking of all assets, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOrder {
    ranked: Vec<usize>,
    /// Ranking statistic, indexed by asset.
    scores: Vec<f64>,
}

impl SelectionOrder {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let ranked = rank_descending(&scores);
        Self { ranked, scores }
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Scores in rank order (non-increasing).
    pub fn ranked_scores(&self) -> Vec<f64> {
        self.ranked.iter().map(|&i| self.scores[i]).collect()
    }

    pub fn prefix(&self, k: usize) -> &[usize] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

/// Indices sorted by score, largest first; equal scores keep ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePortfolio {
    /// Selected assets, ascending.
    pub support: Vec<usize>,
    /// Length `n`, exactly zero off the support.
    pub weights: DVector<f64>,
    pub sharpe: f64,
    pub heuristic: Heuristic,
    pub wall_time: Duration,
    /// False when the sub-instance had `1ᵀΣ⁻¹μ ≤ 0` and the raw direction
    /// was kept.
    pub normalized: bool,
    /// Assets in the order they were picked (forward) or discarded
    /// (backward). Empty for single-pass heuristics.
    pub trace: Vec<usize>,
    pub warnings: Vec<String>,
}

impl SparsePortfolio {
    pub fn cardinality(&self) -> usize {
        self.support.len()
    }
}

pub(crate) struct SupportSolution {
    pub weights: DVector<f64>,
    pub sharpe: f64,
    pub normalized: bool,
}

/// Tangent solve on the principal sub-instance `support` (already sorted).
pub(crate) fn solve_on_support(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    support: &[usize],
) -> Result<SupportSolution> {
    let sub_mu = subvector(mu, support);
    let sub_sigma = principal_submatrix(sigma, support);
    let factor = cholesky(&sub_sigma)?;
    let direction = tangent_direction(&sub_mu, &factor)?;
    let budget = direction.sum();
    let (weights, normalized) = if budget > 0.0 {
        (direction / budget, true)
    } else {
        (direction, false)
    };
    let sharpe = sharpe_raw(&sub_mu, &sub_sigma, &weights)?;
    Ok(SupportSolution {
        weights,
        sharpe,
        normalized,
    })
}

/// Re-solves the tangent problem restricted to `support` and embeds the
/// weights back into the full universe.
pub fn reoptimize(
    moments: &MomentEstimate,
    support: &[usize],
    heuristic: Heuristic,
) -> Result<SparsePortfolio> {
    let n = moments.n();
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if support.is_empty() || support.len() > n {
        return Err(Error::InvalidCardinality {
            k: support.len(),
            n,
        });
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad + 1,
        });
    }

    let solved = solve_on_support(moments.mu(), moments.sigma(), &support)
        .map_err(|e| e.in_subset(&support))?;
    let mut weights = DVector::zeros(n);
    for (pos, &i) in support.iter().enumerate() {
        weights[i] = solved.weights[pos];
    }
    let mut warnings = Vec::new();
    if !solved.normalized {
        warnings.push(format!(
            "degenerate budget on support {support:?}: weights left unnormalized"
        ));
    }
    Ok(SparsePortfolio {
        support,
        weights,
        sharpe: solved.sharpe,
        heuristic,
        wall_time: Duration::ZERO,
        normalized: solved.normalized,
        trace: Vec::new(),
        warnings,
    })
}

fn check_k(moments: &MomentEstimate, k: usize) -> Result<()> {
    if k == 0 || k > moments.n() {
        return Err(Error::InvalidCardinality { k, n: moments.n() });
    }
    Ok(())
}

/// Ranking by `|Lᵀŵ|`.
pub fn oscar_order(moments: &MomentEstimate) -> Result<SelectionOrder> {
    let factor = cholesky(moments.sigma())?;
    let tangent = tangent_with_factor(moments, &factor)?;
    let transformed = transform_by_lt(&factor, tangent.weights())?;
    Ok(SelectionOrder::from_scores(
        transformed.iter().map(|v| v.abs()).collect(),
    ))
}

/// Optimize, select the top `k` of `|Lᵀŵ|`, re-optimize.
pub fn select_oscar(moments: &MomentEstimate, k: usize) -> Result<SparsePortfolio> {
    check_k(moments, k)?;
    let start = Instant::now();
    let order = oscar_order(moments)?;
    let mut out = reoptimize(moments, order.prefix(k), Heuristic::Oscar)?;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Stand-alone Sharpe ratio `μᵢ/√Σᵢᵢ` of every asset. Zero-variance assets
/// score `±∞` by the sign of `μᵢ` (0 when `μᵢ = 0`) and are listed in the
/// second return value.
pub fn individual_sharpes(moments: &MomentEstimate) -> (Vec<f64>, Vec<usize>) {
    let mut flagged = Vec::new();
    let scores = (0..moments.n())
        .map(|i| {
            let var = moments.sigma()[(i, i)];
            let mu = moments.mu()[i];
            if var > 0.0 {
                mu / var.sqrt()
            } else {
                flagged.push(i);
                if mu > 0.0 {
                    f64::INFINITY
                } else if mu < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
        })
        .collect();
    (scores, flagged)
}

/// Baseline SR: top `k` stand-alone Sharpe ratios.
pub fn select_topk_sharpe(moments: &MomentEstimate, k: usize) -> Result<SparsePortfolio> {
    check_k(moments, k)?;
    let start = Instant::now();
    let (scores, flagged) = individual_sharpes(moments);
    let order = SelectionOrder::from_scores(scores);
    let mut out = reoptimize(moments, order.prefix(k), Heuristic::TopSharpe)?;
    for i in flagged {
        out.warnings
            .push(format!("asset {i} has zero variance; ranked at ±infinity"));
    }
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Baseline W: top `k` absolute tangent weights.
pub fn select_topk_weight(moments: &MomentEstimate, k: usize) -> Result<SparsePortfolio> {
    check_k(moments, k)?;
    let start = Instant::now();
    let tangent = solve_tangent(moments)?;
    let order = SelectionOrder::from_scores(tangent.weights().iter().map(|w| w.abs()).collect());
    let mut out = reoptimize(moments, order.prefix(k), Heuristic::TopWeight)?;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Position of the largest `|w|`, first one on ties.
fn argmax_abs(w: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..w.len() {
        if w[i].abs() > w[best].abs() {
            best = i;
        }
    }
    best
}

/// Position of the smallest `|w|`, first one on ties.
fn argmin_abs(w: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..w.len() {
        if w[i].abs() < w[best].abs() {
            best = i;
        }
    }
    best
}

/// Baseline F: grow the support one asset at a time.
pub fn select_forward(moments: &MomentEstimate, k: usize) -> Result<SparsePortfolio> {
    check_k(moments, k)?;
    let start = Instant::now();
    // Kept ascending so positional ties resolve to the smaller asset index.
    let mut remaining: Vec<usize> = (0..moments.n()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let sub = moments.subset(&remaining);
        let tangent = solve_tangent(&sub).map_err(|e| e.in_subset(&remaining))?;
        let pos = argmax_abs(tangent.weights());
        picked.push(remaining.remove(pos));
    }
    let mut out = reoptimize(moments, &picked, Heuristic::Forward)?;
    out.trace = picked;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Baseline B: shrink the universe one asset at a time.
pub fn select_backward(moments: &MomentEstimate, k: usize) -> Result<SparsePortfolio> {
    check_k(moments, k)?;
    let start = Instant::now();
    let mut survivors: Vec<usize> = (0..moments.n()).collect();
    let mut discarded = Vec::with_capacity(moments.n() - k);
    while survivors.len() > k {
        let sub = moments.subset(&survivors);
        let tangent = solve_tangent(&sub).map_err(|e| e.in_subset(&survivors))?;
        let pos = argmin_abs(tangent.weights());
        discarded.push(survivors.remove(pos));
    }
    let mut out = reoptimize(moments, &survivors, Heuristic::Backward)?;
    out.trace = discarded;
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Runs heuristic `h`. [`Heuristic::Exact`] enumerates every support with
/// the default oracle budget and fails if the budget runs out.
pub fn select(moments: &MomentEstimate, k: usize, h: Heuristic) -> Result<SparsePortfolio> {
    match h {
        Heuristic::Oscar => select_oscar(moments, k),
        Heuristic::TopSharpe => select_topk_sharpe(moments, k),
        Heuristic::TopWeight => select_topk_weight(moments, k),
        Heuristic::Forward => select_forward(moments, k),
        Heuristic::Backward => select_backward(moments, k),
        Heuristic::Exact => {
            let res = crate::oracle::solve_exact(moments, k, crate::oracle::DEFAULT_BUDGET)?;
            if !res.exhausted {
                log::warn!(
                    "exact search stopped after {} of {} subsets",
                    res.subsets_evaluated,
                    res.total_subsets
                );
            }
            Ok(res.best)
        }
    }
}
