use std::time::Duration;

use oscar_core::Heuristic;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Cardinalities, either absolute or as fractions of the universe size.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    Absolute(Vec<usize>),
    Fractions(Vec<f64>),
}

/// `⌈f·n⌉`. Products within 1e-9 of an integer are snapped first so that
/// e.g. `0.1 · 30` gives 3 rather than 4.
pub fn k_from_fraction(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

impl KSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KSpec::Absolute(ks) if ks.is_empty() => {
                Err(CliError::Input("at least one k is required".into()))
            }
            KSpec::Absolute(ks) if ks.contains(&0) => {
                Err(CliError::Input("k must be at least 1".into()))
            }
            KSpec::Fractions(fs) if fs.is_empty() => {
                Err(CliError::Input("at least one k is required".into()))
            }
            KSpec::Fractions(fs) => match fs.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                Some(f) => Err(CliError::Input(format!("k fraction {f} outside (0, 1]"))),
                None => Ok(()),
            },
            KSpec::Absolute(_) => Ok(()),
        }
    }

    /// Sorted, de-duplicated cardinalities for a universe of `n` assets.
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let mut ks: Vec<usize> = match self {
            KSpec::Absolute(ks) => {
                if let Some(k) = ks.iter().find(|&&k| k == 0 || k > n) {
                    return Err(CliError::Input(format!("k = {k} outside 1..={n}")));
                }
                ks.clone()
            }
            KSpec::Fractions(fs) => fs.iter().map(|&f| k_from_fraction(f, n)).collect(),
        };
        ks.sort_unstable();
        ks.dedup();
        Ok(ks)
    }
}

pub fn parse_heuristics(list: &str) -> Result<Vec<Heuristic>> {
    let mut out = Vec::new();
    for tag in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tag.eq_ignore_ascii_case("all") {
            out.extend(Heuristic::SELECTORS);
            continue;
        }
        let h: Heuristic = tag
            .parse()
            .map_err(|_| CliError::Input(format!("unknown heuristic {tag:?}")))?;
        if h == Heuristic::Exact {
            return Err(CliError::Input(
                "use --oracle to run the exact search".into(),
            ));
        }
        out.push(h);
    }
    if out.is_empty() {
        return Err(CliError::Input("no heuristics selected".into()));
    }
    out.sort_by_key(|h| heuristic_rank(*h));
    out.dedup();
    Ok(out)
}

/// Display and sort order: SR, W, F, B, OSCAR, then EXACT.
pub fn heuristic_rank(h: Heuristic) -> usize {
    Heuristic::SELECTORS
        .iter()
        .position(|&x| x == h)
        .unwrap_or(Heuristic::SELECTORS.len())
}

/// Everything that determines the non-time content of a bench run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: String,
    pub k_spec: KSpec,
    pub heuristics: Vec<Heuristic>,
    pub oracle: bool,
    #[serde(rename = "oracle_budget_s")]
    #[serde(serialize_with = "secs")]
    pub oracle_budget: Duration,
    pub rf: f64,
    pub seed: u64,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
