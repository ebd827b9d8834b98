//! Instance files, price ingestion and synthetic instance specs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use oscar_core::market::{compute_returns, drop_incomplete_assets, estimate_moments, load_prices};
use oscar_core::spd::DEFAULT_MAX_JITTER;
use oscar_core::synth::{generate_indexed, DEFAULT_MU_RANGE, DEFAULT_VOL_RANGE};
use oscar_core::{MomentEstimate, Structure, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    /// Return observations used for estimation.
    pub rows: usize,
    pub dropped: Vec<String>,
    pub jitter: f64,
}

/// The on-disk exchange format between `ingest` and `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub tickers: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub meta: InstanceMeta,
}

impl InstanceFile {
    pub fn from_moments(moments: &MomentEstimate, rows: usize, dropped: Vec<String>) -> Self {
        let sigma = moments.sigma();
        Self {
            tickers: moments.tickers().to_vec(),
            mu: moments.mu().iter().copied().collect(),
            sigma: (0..sigma.nrows())
                .map(|i| sigma.row(i).iter().copied().collect())
                .collect(),
            meta: InstanceMeta {
                rows,
                dropped,
                jitter: moments.jitter(),
            },
        }
    }

    pub fn to_moments(&self) -> oscar_core::Result<MomentEstimate> {
        let n = self.mu.len();
        if let Some(row) = self.sigma.iter().find(|r| r.len() != n) {
            return Err(oscar_core::Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if self.sigma.len() != n {
            return Err(oscar_core::Error::DimensionMismatch {
                expected: n,
                got: self.sigma.len(),
            });
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| self.sigma[i][j]);
        MomentEstimate::new(
            self.tickers.clone(),
            DVector::from_vec(self.mu.clone()),
            sigma,
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: invalid instance file: {e}", path.display())))
    }
}

/// Prices CSV to conditioned moments, as written by `ingest`.
pub fn ingest_prices(path: &Path) -> Result<InstanceFile> {
    let data = |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    };
    let panel = load_prices(path).map_err(|e| match e {
        io @ oscar_core::Error::Io { .. } => CliError::Core(io),
        other => data(other),
    })?;
    let (panel, dropped) = drop_incomplete_assets(panel).map_err(data)?;
    if !dropped.is_empty() {
        log::info!(
            "dropped {} incomplete assets: {}",
            dropped.len(),
            dropped.join(", ")
        );
    }
    let returns = compute_returns(&panel).map_err(data)?;
    let rows = returns.returns().nrows();
    let moments = estimate_moments(&returns)
        .and_then(|m| m.conditioned(DEFAULT_MAX_JITTER))
        .map_err(data)?;
    Ok(InstanceFile::from_moments(&moments, rows, dropped))
}

/// A benchmark-ready instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub moments: MomentEstimate,
    /// Total diagonal conditioning, including any applied before the
    /// instance was written to disk.
    pub jitter: f64,
}

/// Parsed `--synth` argument, e.g. `factor:n=14,f=3,count=30`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthArg {
    pub n: usize,
    pub structure: Structure,
    pub mu_range: (f64, f64),
    /// Instances drawn from consecutive streams of the same seed.
    pub count: u64,
}

impl SynthArg {
    pub fn label(&self) -> &'static str {
        match self.structure {
            Structure::Diagonal { .. } => "diagonal",
            Structure::Equicorrelated { .. } => "equicorr",
            Structure::RandomFactor { .. } => "factor",
        }
    }

    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n: self.n,
            structure: self.structure.clone(),
            mu_range: self.mu_range,
            seed,
        }
    }
}

impl FromStr for SynthArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut n = None;
        let mut count = 1;
        let mut mu = DEFAULT_MU_RANGE;
        let mut vol = DEFAULT_VOL_RANGE;
        let mut rho = None;
        let mut factors = 3;
        let mut idio = None;
        for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
            let key = key.trim();
            let value = value.trim();
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| format!("{key}: not a number: {value:?}"))
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| format!("{key}: not a count: {value:?}"))
            };
            match key {
                "n" => n = Some(int()?),
                "count" => count = int()? as u64,
                "mu_lo" => mu.0 = float()?,
                "mu_hi" => mu.1 = float()?,
                "vol_lo" => vol.0 = float()?,
                "vol_hi" => vol.1 = float()?,
                "rho" => rho = Some(float()?),
                "f" | "factors" => factors = int()?,
                "idio" => idio = Some(float()?),
                _ => return Err(format!("unknown synth parameter {key:?}")),
            }
        }
        let n = n.ok_or("synth spec needs n=<assets>")?;
        let structure = match kind.trim() {
            "diagonal" | "diag" => Structure::Diagonal { vol_range: vol },
            "equicorr" | "equicorrelated" => Structure::Equicorrelated {
                rho: rho.ok_or("equicorr needs rho=<value>")?,
                vol_range: vol,
            },
            "factor" => match idio {
                Some(idio_scale) => Structure::RandomFactor {
                    factors,
                    idio_scale,
                },
                None => Structure::random_factor(factors),
            },
            other => {
                return Err(format!(
                    "unknown synth kind {other:?} (diagonal, equicorr, factor)"
                ))
            }
        };
        if count == 0 {
            return Err("count must be at least 1".into());
        }
        Ok(SynthArg {
            n,
            structure,
            mu_range: mu,
            count,
        })
    }
}

/// Where instances come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// Prices CSV (estimated on the fly) or instance JSON.
    File(PathBuf),
    Synth(SynthArg),
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into())
}

/// Loads every instance of `source`, applies the risk-free rate and
/// conditions the covariance.
pub fn load_instances(source: &Source, seed: u64, rf: f64) -> Result<Vec<Instance>> {
    let raw: Vec<(String, MomentEstimate, f64)> = match source {
        Source::File(path) => {
            let is_csv = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let file = if is_csv {
                ingest_prices(path)?
            } else {
                InstanceFile::read(path)?
            };
            let moments = file.to_moments().map_err(|source| CliError::Data {
                path: path.clone(),
                source,
            })?;
            vec![(file_id(path), moments, file.meta.jitter)]
        }
        Source::Synth(arg) => {
            let spec = arg.spec(seed);
            (0..arg.count)
                .map(|i| {
                    let m = generate_indexed(&spec, i)?;
                    Ok((format!("{}-n{}-s{seed}-i{i}", arg.label(), arg.n), m, 0.0))
                })
                .collect::<oscar_core::Result<_>>()?
        }
    };
    raw.into_iter()
        .map(|(id, m, prior)| {
            let m = m.excess_of(rf).conditioned(DEFAULT_MAX_JITTER)?;
            Ok(Instance {
                jitter: prior + m.jitter(),
                id,
                moments: m,
            })
        })
        .collect()
}
