//! Reproducible synthetic instances and the dominance-vs-performance sweep.
//!
//! Every instance is drawn from a ChaCha stream keyed by `(seed, index)`, so
//! instances can be generated in any order or in parallel and still come
//! out identical. Within one stream the draw order is fixed: expected
//! returns first, then volatilities (or factor loadings and idiosyncratic
//! variances).

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MomentEstimate;
use crate::metrics::{diagonal_dominance, pearson_correlation, performance_ratio};
use crate::oracle::solve_exact;
use crate::select::select_oscar;

pub const DEFAULT_MU_RANGE: (f64, f64) = (-0.05, 0.15);
pub const DEFAULT_VOL_RANGE: (f64, f64) = (0.1, 0.4);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// Independent assets with volatilities uniform in `vol_range`.
    Diagonal { vol_range: (f64, f64) },
    /// `Σᵢⱼ = sᵢ·sⱼ·(ρ + (1 − ρ)·δᵢⱼ)` with `sᵢ` uniform in `vol_range`.
    Equicorrelated { rho: f64, vol_range: (f64, f64) },
    /// `Σ = B·Bᵀ + D`: `B` is `n × factors` standard normal, and
    /// `Dᵢᵢ = idio_scale · u` with `u` uniform in `[0.5, 1.5)`.
    RandomFactor { factors: usize, idio_scale: f64 },
}

impl Structure {
    /// Factor model with `idio_scale = factors`: expected systematic and
    /// idiosyncratic variance are equal.
    pub fn random_factor(factors: usize) -> Self {
        Structure::RandomFactor {
            factors,
            idio_scale: factors.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub structure: Structure,
    pub mu_range: (f64, f64),
    pub seed: u64,
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::Spec(format!(
            "{name} ({lo}, {hi}) is not a finite interval"
        )));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Spec(format!("n must be at least 2, got {}", self.n)));
        }
        check_range("mu_range", self.mu_range)?;
        match &self.structure {
            Structure::Diagonal { vol_range } => check_vols(*vol_range),
            Structure::Equicorrelated { rho, vol_range } => {
                let lower = -1.0 / (self.n as f64 - 1.0);
                if !(*rho > lower && *rho < 1.0) {
                    return Err(Error::Spec(format!(
                        "rho = {rho} outside ({lower}, 1) for n = {}",
                        self.n
                    )));
                }
                check_vols(*vol_range)
            }
            Structure::RandomFactor { idio_scale, .. } => {
                if !(*idio_scale > 0.0) || !idio_scale.is_finite() {
                    return Err(Error::Spec(format!(
                        "idio_scale must be positive, got {idio_scale}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_vols(vol_range: (f64, f64)) -> Result<()> {
    check_range("vol_range", vol_range)?;
    if !(vol_range.0 > 0.0) {
        return Err(Error::Spec(format!(
            "volatilities must be positive, got lower bound {}",
            vol_range.0
        )));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Instance 0 of `spec`.
pub fn generate(spec: &SynthSpec) -> Result<MomentEstimate> {
    generate_indexed(spec, 0)
}

/// Instance `index` of `spec`; independent of every other index.
pub fn generate_indexed(spec: &SynthSpec, index: u64) -> Result<MomentEstimate> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);

    let mu = DVector::from_fn(n, |_, _| uniform(&mut rng, spec.mu_range));
    let sigma = match &spec.structure {
        Structure::Diagonal { vol_range } => {
            let vols: Vec<f64> = (0..n).map(|_| uniform(&mut rng, *vol_range)).collect();
            DMatrix::from_fn(n, n, |i, j| if i == j { vols[i] * vols[i] } else { 0.0 })
        }
        Structure::Equicorrelated { rho, vol_range } => {
            let vols: Vec<f64> = (0..n).map(|_| uniform(&mut rng, *vol_range)).collect();
            DMatrix::from_fn(n, n, |i, j| {
                let corr = if i == j { 1.0 } else { *rho };
                vols[i] * vols[j] * corr
            })
        }
        Structure::RandomFactor {
            factors,
            idio_scale,
        } => {
            let loadings =
                DMatrix::from_fn(n, *factors, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut sigma = &loadings * loadings.transpose();
            for i in 0..n {
                sigma[(i, i)] += idio_scale * (0.5 + rng.random::<f64>());
            }
            sigma
        }
    };
    MomentEstimate::unnamed(mu, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    /// Performance per instance is averaged over these cardinalities.
    pub ks: Vec<usize>,
    pub rhos: Vec<f64>,
    pub seeds_per_rho: usize,
    /// Cell `s` of every `ρ` uses seed `base_seed + s`, so the same expected
    /// returns and volatilities are reused across correlation levels.
    pub base_seed: u64,
    pub mu_range: (f64, f64),
    pub vol_range: (f64, f64),
    #[serde(skip, default = "default_budget")]
    pub oracle_budget: Duration,
}

fn default_budget() -> Duration {
    crate::oracle::DEFAULT_BUDGET
}

impl SweepConfig {
    pub fn new(n: usize, ks: Vec<usize>, rhos: Vec<f64>, seeds_per_rho: usize) -> Self {
        Self {
            n,
            ks,
            rhos,
            seeds_per_rho,
            base_seed: 0,
            mu_range: DEFAULT_MU_RANGE,
            vol_range: DEFAULT_VOL_RANGE,
            oracle_budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rho: f64,
    pub seed: u64,
    pub dominance: f64,
    /// Mean OSCAR performance over the configured `ks`; absent when any
    /// oracle run for this instance was not exhausted.
    pub performance_pct: Option<f64>,
    pub per_k: Vec<f64>,
    pub oracle_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub rho: f64,
    pub mean_dominance: f64,
    pub mean_performance_pct: Option<f64>,
    pub cells: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub ks: Vec<usize>,
    pub cells: Vec<SweepCell>,
    pub per_rho: Vec<RhoSummary>,
    /// Pearson correlation between dominance and performance over all
    /// included cells; absent when undefined (e.g. constant performance).
    pub correlation: Option<f64>,
}

/// Equicorrelated sweep: for every `ρ` and seed, run OSCAR and the exact
/// search and record `(dominance, performance)`.
pub fn dominance_sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.ks.is_empty() {
        return Err(Error::Spec("sweep needs at least one k".into()));
    }
    if let Some(&k) = config.ks.iter().find(|&&k| k == 0 || k > config.n) {
        return Err(Error::InvalidCardinality { k, n: config.n });
    }
    let mut rhos = config.rhos.clone();
    rhos.sort_by(f64::total_cmp);

    let mut cells = Vec::with_capacity(rhos.len() * config.seeds_per_rho);
    for &rho in &rhos {
        for s in 0..config.seeds_per_rho {
            let seed = config.base_seed.wrapping_add(s as u64);
            let spec = SynthSpec {
                n: config.n,
                structure: Structure::Equicorrelated {
                    rho,
                    vol_range: config.vol_range,
                },
                mu_range: config.mu_range,
                seed,
            };
            let moments = generate(&spec)?;
            let dominance = diagonal_dominance(moments.sigma())?;
            let mut per_k = Vec::with_capacity(config.ks.len());
            let mut exhausted = true;
            for &k in &config.ks {
                let oracle = solve_exact(&moments, k, config.oracle_budget)?;
                if !oracle.exhausted {
                    log::warn!(
                        "sweep cell rho={rho} seed={seed} k={k}: oracle not exhausted, excluded"
                    );
                    exhausted = false;
                    break;
                }
                let oscar = select_oscar(&moments, k)?;
                per_k.push(performance_ratio(oscar.sharpe, oracle.best.sharpe)?);
            }
            let performance_pct = exhausted.then(|| per_k.iter().sum::<f64>() / per_k.len() as f64);
            cells.push(SweepCell {
                rho,
                seed,
                dominance,
                performance_pct,
                per_k,
                oracle_exhausted: exhausted,
            });
        }
    }

    let per_rho = rhos
        .iter()
        .map(|&rho| {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.rho == rho).collect();
            let perfs: Vec<f64> = group.iter().filter_map(|c| c.performance_pct).collect();
            RhoSummary {
                rho,
                mean_dominance: group.iter().map(|c| c.dominance).sum::<f64>()
                    / group.len().max(1) as f64,
                mean_performance_pct: (!perfs.is_empty())
                    .then(|| perfs.iter().sum::<f64>() / perfs.len() as f64),
                cells: perfs.len(),
                excluded: group.len() - perfs.len(),
            }
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter_map(|c| c.performance_pct.map(|p| (c.dominance, p)))
        .unzip();
    let correlation = pearson_correlation(&xs, &ys).ok();

    Ok(SweepResult {
        ks: config.ks.clone(),
        cells,
        per_rho,
        correlation,
    })
}
