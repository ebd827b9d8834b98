//! Exact solution of the cardinality-constrained problem by enumerating
//! every support of size `k` and re-optimizing on each.
//!
//! Supports are visited in lexicographic order. The enumeration stops at a
//! wall-clock budget, in which case the result is the best support seen so
//! far and `exhausted` is false. Only exhausted results are ground truth.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market::MomentEstimate;
use crate::select::{reoptimize, solve_on_support, Heuristic, SparsePortfolio};

pub const DEFAULT_BUDGET: Duration = Duration::from_secs(300);

/// How often (in subsets) the deadline is checked.
const DEADLINE_STRIDE: u64 = 256;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best: SparsePortfolio,
    pub subsets_evaluated: u64,
    pub total_subsets: u128,
    /// True iff every one of the `C(n, k)` supports was tried.
    pub exhausted: bool,
    pub budget: Duration,
    /// Supports whose sub-problem could not be solved, with the reason.
    pub skipped: Vec<(Vec<usize>, String)>,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `combo` to the next `k`-subset of `0..n` in lexicographic
/// order, never touching positions before `fixed`. Returns false when the
/// sequence is exhausted.
fn next_combination(combo: &mut [usize], n: usize, fixed: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > fixed {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Candidate for the running maximum: Sharpe ratio and its support.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sharpe: f64,
    pub support: Vec<usize>,
}

/// Total order used by the reduction: higher Sharpe wins, and among equal
/// Sharpe ratios the lexicographically smaller support wins. Associative and
/// commutative, so any partitioning of the search yields the same answer.
pub fn better_of(a: Candidate, b: Candidate) -> Candidate {
    match a.sharpe.total_cmp(&b.sharpe) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.support <= b.support {
                a
            } else {
                b
            }
        }
    }
}

struct Partial {
    best: Option<Candidate>,
    evaluated: u64,
    skipped: Vec<(Vec<usize>, String)>,
    finished: bool,
}

/// Walks every `k`-subset whose smallest element is `first`.
fn search_block(
    mu: &DVector<f64>,
    sigma: &nalgebra::DMatrix<f64>,
    k: usize,
    first: usize,
    deadline: Instant,
    partial: &mut Partial,
) {
    let n = mu.len();
    let mut combo: Vec<usize> = (first..first + k).collect();
    loop {
        if partial.evaluated.is_multiple_of(DEADLINE_STRIDE) && Instant::now() >= deadline {
            partial.finished = false;
            return;
        }
        partial.evaluated += 1;
        match solve_on_support(mu, sigma, &combo) {
            Ok(sol) => {
                let replace = match &partial.best {
                    None => true,
                    // Lexicographic visiting order: ties keep the incumbent.
                    Some(b) => sol.sharpe > b.sharpe,
                };
                if replace {
                    partial.best = Some(Candidate {
                        sharpe: sol.sharpe,
                        support: combo.clone(),
                    });
                }
            }
            Err(e) => partial.skipped.push((combo.clone(), e.to_string())),
        }
        if !next_combination(&mut combo, n, 1) {
            return;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    moments: &MomentEstimate,
    k: usize,
    budget: Duration,
    start: Instant,
    best: Option<Candidate>,
    evaluated: u64,
    mut skipped: Vec<(Vec<usize>, String)>,
    finished: bool,
) -> Result<OracleResult> {
    skipped.sort();
    if !skipped.is_empty() {
        log::warn!("exact search skipped {} unsolvable supports", skipped.len());
    }
    let Some(best) = best else {
        return Err(match skipped.first() {
            Some((subset, reason)) => Error::Subset {
                subset: subset.clone(),
                source: Box::new(Error::Validation(format!(
                    "no solvable support of size {k}: {reason}"
                ))),
            },
            None => Error::Validation(format!(
                "budget {budget:?} expired before any support of size {k} was evaluated"
            )),
        });
    };
    let mut portfolio = reoptimize(moments, &best.support, Heuristic::Exact)?;
    portfolio.wall_time = start.elapsed();
    let total = binomial(moments.n(), k);
    Ok(OracleResult {
        best: portfolio,
        subsets_evaluated: evaluated,
        total_subsets: total,
        exhausted: finished && evaluated as u128 == total,
        budget,
        skipped,
    })
}

fn check_k(moments: &MomentEstimate, k: usize) -> Result<()> {
    if k == 0 || k > moments.n() {
        return Err(Error::InvalidCardinality { k, n: moments.n() });
    }
    Ok(())
}

/// Best support of size `k` by exhaustive search.
pub fn solve_exact(moments: &MomentEstimate, k: usize, budget: Duration) -> Result<OracleResult> {
    check_k(moments, k)?;
    let start = Instant::now();
    let deadline = start + budget;
    let mut partial = Partial {
        best: None,
        evaluated: 0,
        skipped: Vec::new(),
        finished: true,
    };
    for first in 0..=(moments.n() - k) {
        search_block(
            moments.mu(),
            moments.sigma(),
            k,
            first,
            deadline,
            &mut partial,
        );
        if !partial.finished {
            break;
        }
    }
    finish(
        moments,
        k,
        budget,
        start,
        partial.best,
        partial.evaluated,
        partial.skipped,
        partial.finished,
    )
}

/// [`solve_exact`] split across `workers` threads. Blocks of supports that
/// share a smallest element are dealt out round-robin; the per-worker
/// maxima are merged with [`better_of`], so an exhausted run returns the
/// same support as the sequential search.
pub fn solve_exact_parallel(
    moments: &MomentEstimate,
    k: usize,
    budget: Duration,
    workers: usize,
) -> Result<OracleResult> {
    check_k(moments, k)?;
    let workers = workers.max(1);
    let start = Instant::now();
    let deadline = start + budget;
    let blocks = moments.n() - k + 1;

    let partials: Vec<Partial> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut partial = Partial {
                        best: None,
                        evaluated: 0,
                        skipped: Vec::new(),
                        finished: true,
                    };
                    for first in (w..blocks).step_by(workers) {
                        search_block(
                            moments.mu(),
                            moments.sigma(),
                            k,
                            first,
                            deadline,
                            &mut partial,
                        );
                        if !partial.finished {
                            break;
                        }
                    }
                    partial
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("oracle worker panicked"))
            .collect()
    });

    let mut best: Option<Candidate> = None;
    let mut evaluated = 0;
    let mut skipped = Vec::new();
    let mut finished = true;
    for p in partials {
        evaluated += p.evaluated;
        skipped.extend(p.skipped);
        finished &= p.finished;
        best = match (best, p.best) {
            (Some(a), Some(b)) => Some(better_of(a, b)),
            (a, b) => a.or(b),
        };
    }
    finish(
        moments, k, budget, start, best, evaluated, skipped, finished,
    )
}

/// Number of supports and a rough runtime estimate (seconds) obtained by
/// timing a sample of sub-problem solves.
pub fn estimate_cost(moments: &MomentEstimate, k: usize) -> Result<(u128, f64)> {
    check_k(moments, k)?;
    let total = binomial(moments.n(), k);
    let sample = total.min(64) as usize;
    let mut combo: Vec<usize> = (0..k).collect();
    let start = Instant::now();
    for _ in 0..sample {
        let _ = solve_on_support(moments.mu(), moments.sigma(), &combo);
        if !next_combination(&mut combo, moments.n(), 0) {
            break;
        }
    }
    let per = start.elapsed().as_secs_f64() / sample.max(1) as f64;
    Ok((total, per * total as f64))
}
