//! Benchmark harness for sparse tangent portfolio heuristics.
//!
//! The `oscar` binary is a thin wrapper around [`run`]; everything it does
//! is reachable from here so that tests can drive the commands in-process.

pub mod bench;
pub mod config;
pub mod error;
pub mod instance;
pub mod report;

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use oscar_core::select::select;
use oscar_core::synth::{dominance_sweep, SweepConfig};
use oscar_core::Heuristic;
use serde_json::json;

pub use bench::{run_bench, BenchOptions, BenchRun};
pub use config::{k_from_fraction, KSpec, RunConfig};
pub use error::{CliError, Result};
use error::{EXIT_OK, EXIT_PARTIAL};
pub use instance::{load_instances, Instance, InstanceFile, Source, SynthArg};

#[derive(Debug, Parser)]
#[command(
    name = "oscar",
    version,
    about = "Sparse tangent portfolios: heuristics, exact search and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate moments from a prices CSV and write an instance file.
    Ingest(IngestArgs),
    /// Run heuristics (and optionally the exact search) and write reports.
    Bench(BenchArgs),
    /// Equicorrelated sweep of diagonal dominance against OSCAR performance.
    Sweep(SweepArgs),
    /// Solve one instance with one heuristic and print the portfolio as JSON.
    Solve(SolveArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Prices CSV: a date column followed by one column per ticker.
    #[arg(long)]
    pub input: PathBuf,
    /// Instance JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the list of dropped tickers as JSON.
    #[arg(long)]
    pub dropped_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourceArgs {
    /// Prices CSV or instance JSON.
    #[arg(long, group = "source")]
    pub input: Option<PathBuf>,
    /// Synthetic instances, e.g. `factor:n=14,f=3,count=30`,
    /// `equicorr:n=14,rho=0.3` or `diagonal:n=12`.
    #[arg(long, group = "source")]
    pub synth: Option<SynthArg>,
}

impl SourceArgs {
    pub fn source(&self) -> Source {
        match (&self.input, &self.synth) {
            (Some(p), _) => Source::File(p.clone()),
            (None, Some(s)) => Source::Synth(s.clone()),
            (None, None) => unreachable!("clap requires one source"),
        }
    }

    fn describe(&self) -> String {
        match (&self.input, &self.synth) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(s)) => serde_json::to_string(s).expect("synth arg serializes"),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Cardinalities.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "k_frac",
        required_unless_present = "k_frac"
    )]
    pub k: Vec<usize>,
    /// Cardinalities as fractions of the universe, rounded up.
    #[arg(long, value_delimiter = ',')]
    pub k_frac: Vec<f64>,
    /// Comma-separated subset of SR, W, F, B, OSCAR, or `all`.
    #[arg(long, default_value = "all")]
    pub heuristics: String,
    /// Compare against the exact search.
    #[arg(long)]
    pub oracle: bool,
    /// Time limit per exact search, in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub oracle_budget: f64,
    /// Per-period risk-free rate subtracted from expected returns.
    #[arg(long, default_value_t = 0.0)]
    pub rf: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
    /// Exit with status 1 if any cell failed.
    #[arg(long)]
    pub strict: bool,
    /// Run the exact search even if it is estimated to exceed the budget.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 14)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.6,0.9")]
    pub rhos: Vec<f64>,
    /// Instances per correlation level.
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    /// First seed; instance `s` of every level uses `seed + s`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300.0)]
    pub oracle_budget: f64,
    #[arg(long, default_value = "sweep-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "OSCAR")]
    pub heuristic: Heuristic,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rf: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn budget(secs: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(secs)
        .map_err(|_| CliError::Input(format!("invalid oracle budget {secs}")))
}

fn write_file(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<InstanceFile> {
    let file = instance::ingest_prices(&args.input)?;
    write_file(&args.out, &file.to_json())?;
    if let Some(path) = &args.dropped_report {
        let mut text = serde_json::to_string_pretty(&json!({ "dropped": file.meta.dropped }))
            .expect("report serializes");
        text.push('\n');
        write_file(path, &text)?;
    }
    Ok(file)
}

impl BenchArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let k_spec = if self.k_frac.is_empty() {
            KSpec::Absolute(self.k.clone())
        } else {
            KSpec::Fractions(self.k_frac.clone())
        };
        k_spec.validate()?;
        Ok(RunConfig {
            input: self.source.describe(),
            k_spec,
            heuristics: config::parse_heuristics(&self.heuristics)?,
            oracle: self.oracle,
            oracle_budget: budget(self.oracle_budget)?,
            rf: self.rf,
            seed: self.seed,
        })
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchRun> {
    let config = args.run_config()?;
    let instances = load_instances(&args.source.source(), args.seed, args.rf)?;
    let run = run_bench(
        &config,
        &instances,
        BenchOptions {
            jobs: args.jobs,
            force: args.force,
        },
    )?;
    report::write_bench_outputs(&args.out, &run)?;
    Ok(run)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<oscar_core::synth::SweepResult> {
    let mut config = SweepConfig::new(args.n, args.k.clone(), args.rhos.clone(), args.seeds);
    config.base_seed = args.seed;
    config.oracle_budget = budget(args.oracle_budget)?;
    let result = dominance_sweep(&config)?;
    report::write_sweep_outputs(&args.out, &result)?;
    Ok(result)
}

/// Portfolio JSON for `solve`.
pub fn cmd_solve(args: &SolveArgs) -> Result<serde_json::Value> {
    if let Some(SynthArg { count, .. }) = &args.source.synth {
        if *count != 1 {
            return Err(CliError::Input(
                "solve takes a single synthetic instance (count=1)".into(),
            ));
        }
    }
    let inst = load_instances(&args.source.source(), args.seed, args.rf)?
        .into_iter()
        .next()
        .ok_or_else(|| CliError::Internal("no instance loaded".into()))?;
    if args.k == 0 || args.k > inst.moments.n() {
        return Err(CliError::Input(format!(
            "k = {} outside 1..={}",
            args.k,
            inst.moments.n()
        )));
    }
    let p = select(&inst.moments, args.k, args.heuristic)?;
    let tickers = inst.moments.tickers();
    let mut warnings = p.warnings.clone();
    if inst.jitter > 0.0 {
        warnings.insert(
            0,
            format!("covariance conditioned with jitter {:e}", inst.jitter),
        );
    }
    Ok(json!({
        "instance": inst.id,
        "heuristic": p.heuristic,
        "k": args.k,
        "support": p.support.iter().map(|&i| &tickers[i]).collect::<Vec<_>>(),
        "support_index": p.support,
        "weights": p.support.iter().map(|&i| p.weights[i]).collect::<Vec<_>>(),
        "sharpe": p.sharpe,
        "normalized": p.normalized,
        "jitter": inst.jitter,
        "wall_time_s": p.wall_time.as_secs_f64(),
        "warnings": warnings,
    }))
}

/// Executes a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Ingest(args) => {
            let file = cmd_ingest(&args)?;
            println!(
                "wrote {} ({} assets, {} rows, {} dropped)",
                args.out.display(),
                file.tickers.len(),
                file.meta.rows,
                file.meta.dropped.len()
            );
            Ok(EXIT_OK)
        }
        Command::Bench(args) => {
            let run = cmd_bench(&args)?;
            print!("{}", report::table_time_performance(&run.records));
            let failures = run.failures();
            println!(
                "{} cells, {failures} failed; reports in {}",
                run.records.len(),
                args.out.display()
            );
            Ok(if failures > 0 && args.strict {
                EXIT_PARTIAL
            } else {
                EXIT_OK
            })
        }
        Command::Sweep(args) => {
            let result = cmd_sweep(&args)?;
            for r in &result.per_rho {
                println!(
                    "rho = {:<5} dominance {:.4}  performance {}  ({} cells, {} excluded)",
                    r.rho,
                    r.mean_dominance,
                    r.mean_performance_pct
                        .map(|p| format!("{p:.2}%"))
                        .unwrap_or_else(|| "-".into()),
                    r.cells,
                    r.excluded
                );
            }
            match result.correlation {
                Some(c) => println!("correlation(dominance, performance) = {c:.4}"),
                None => println!("correlation undefined"),
            }
            Ok(EXIT_OK)
        }
        Command::Solve(args) => {
            let v = cmd_solve(&args)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&v).expect("value serializes")
            );
            Ok(EXIT_OK)
        }
    }
}
