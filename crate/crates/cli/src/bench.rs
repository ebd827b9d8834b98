//! Runs every (instance, k, heuristic) cell and compares it with the exact
//! search.

use std::panic::{catch_unwind, AssertUnwindSafe};

use oscar_core::metrics::{diagonal_dominance, hit_count, performance_ratio};
use oscar_core::oracle::{estimate_cost, solve_exact};
use oscar_core::select::select;
use oscar_core::{BenchRecord, Heuristic, OracleResult, SparsePortfolio};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::instance::Instance;

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub jobs: usize,
    /// Run the exact search even when its estimated cost exceeds the budget.
    pub force: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            force: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub config: RunConfig,
    pub config_hash: String,
    /// In input order of instances, then ascending k, then heuristic
    /// (EXACT last).
    pub records: Vec<BenchRecord>,
}

impl BenchRun {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

fn guarded<T>(f: impl FnOnce() -> oscar_core::Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("internal: {msg}"))
        }
    }
}

struct Cell {
    inst: usize,
    k: usize,
}

fn check_oracle_cost(
    config: &RunConfig,
    instances: &[Instance],
    plan: &[Cell],
    force: bool,
) -> Result<()> {
    for cell in plan {
        let inst = &instances[cell.inst];
        let (count, secs) = estimate_cost(&inst.moments, cell.k)?;
        log::info!(
            "{} k={}: {count} supports, estimated {secs:.1}s",
            inst.id,
            cell.k
        );
        if secs > config.oracle_budget.as_secs_f64() && !force {
            return Err(CliError::Input(format!(
                "{} k={}: exact search over {count} supports is estimated at {secs:.1}s, \
                 above the {:.0}s budget (pass --force to run anyway)",
                inst.id,
                cell.k,
                config.oracle_budget.as_secs_f64()
            )));
        }
    }
    Ok(())
}

fn record(
    inst: &Instance,
    dominance: f64,
    k: usize,
    heuristic: Heuristic,
    outcome: std::result::Result<&SparsePortfolio, &str>,
    oracle: Option<&std::result::Result<OracleResult, String>>,
) -> BenchRecord {
    let oracle_best = oracle.and_then(|o| o.as_ref().ok());
    let mut rec = BenchRecord {
        instance_id: inst.id.clone(),
        n: inst.moments.n(),
        k,
        heuristic,
        sharpe: None,
        performance_pct: None,
        hit_count: None,
        wall_time_s: 0.0,
        oracle_exhausted: oracle_best.is_some_and(|o| o.exhausted),
        jitter: inst.jitter,
        dominance,
        support: Vec::new(),
        warnings: Vec::new(),
        error: None,
    };
    match outcome {
        Err(e) => rec.error = Some(e.to_string()),
        Ok(p) => {
            rec.sharpe = Some(p.sharpe);
            rec.wall_time_s = p.wall_time.as_secs_f64();
            rec.support = p.support.clone();
            rec.warnings = p.warnings.clone();
            if let Some(o) = oracle_best {
                rec.hit_count = Some(hit_count(&p.support, &o.best.support));
                match performance_ratio(p.sharpe, o.best.sharpe) {
                    Ok(v) => rec.performance_pct = Some(v),
                    Err(e) => rec.warnings.push(e.to_string()),
                }
                if !o.exhausted {
                    rec.warnings.push(format!(
                        "exact search stopped after {} of {} supports",
                        o.subsets_evaluated, o.total_subsets
                    ));
                }
            }
        }
    }
    rec
}

/// Runs the configured heuristics (and the exact search, if enabled) on
/// every instance. Per-cell failures are recorded, not returned.
pub fn run_bench(
    config: &RunConfig,
    instances: &[Instance],
    opts: BenchOptions,
) -> Result<BenchRun> {
    config.k_spec.validate()?;
    let mut plan = Vec::new();
    let mut dominance = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        dominance.push(diagonal_dominance(inst.moments.sigma()).unwrap_or(f64::NAN));
        for k in config.k_spec.resolve(inst.moments.n())? {
            plan.push(Cell { inst: i, k });
        }
    }
    if config.oracle {
        check_oracle_cost(config, instances, &plan, opts.force)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;

    let (oracles, heuristics) = pool.install(|| {
        let oracles: Vec<Option<std::result::Result<OracleResult, String>>> = plan
            .par_iter()
            .map(|c| {
                config.oracle.then(|| {
                    guarded(|| solve_exact(&instances[c.inst].moments, c.k, config.oracle_budget))
                })
            })
            .collect();
        let tasks: Vec<(usize, Heuristic)> = (0..plan.len())
            .flat_map(|c| config.heuristics.iter().map(move |&h| (c, h)))
            .collect();
        let heuristics: Vec<std::result::Result<SparsePortfolio, String>> = tasks
            .par_iter()
            .map(|&(c, h)| guarded(|| select(&instances[plan[c].inst].moments, plan[c].k, h)))
            .collect();
        (oracles, heuristics)
    });

    let mut records = Vec::new();
    let per_cell = config.heuristics.len();
    for (c, cell) in plan.iter().enumerate() {
        let inst = &instances[cell.inst];
        let oracle = oracles[c].as_ref();
        for (j, &h) in config.heuristics.iter().enumerate() {
            let outcome = heuristics[c * per_cell + j]
                .as_ref()
                .map_err(String::as_str);
            records.push(record(
                inst,
                dominance[cell.inst],
                cell.k,
                h,
                outcome,
                oracle,
            ));
        }
        if let Some(o) = oracle {
            let outcome = o.as_ref().map(|r| &r.best).map_err(String::as_str);
            let mut rec = record(
                inst,
                dominance[cell.inst],
                cell.k,
                Heuristic::Exact,
                outcome,
                oracle,
            );
            if let Ok(r) = o {
                for (subset, reason) in &r.skipped {
                    rec.warnings
                        .push(format!("skipped support {subset:?}: {reason}"));
                }
            }
            records.push(rec);
        }
    }

    let failures = records.iter().filter(|r| r.failed()).count();
    if failures > 0 {
        log::warn!("{failures} of {} cells failed", records.len());
    }
    Ok(BenchRun {
        config: config.clone(),
        config_hash: config.hash(),
        records,
    })
}
