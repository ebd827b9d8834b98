//! Output files of `bench` and `sweep`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oscar_core::synth::SweepResult;
use oscar_core::{BenchRecord, Heuristic};
use serde_json::{json, Value};

use crate::bench::BenchRun;
use crate::config::heuristic_rank;
use crate::error::{CliError, Result};

pub const RECORDS_HEADER: [&str; 11] = [
    "instance_id",
    "n",
    "k",
    "heuristic",
    "sharpe",
    "performance_pct",
    "hit_count",
    "wall_time_s",
    "oracle_exhausted",
    "jitter",
    "dominance",
];

pub const SWEEP_HEADER: [&str; 5] = [
    "rho",
    "seed",
    "dominance",
    "performance_pct",
    "oracle_exhausted",
];

/// Label for what the performance ratio is measured against.
pub fn denominator(exhausted: bool) -> &'static str {
    if exhausted {
        "exhausted-exact"
    } else {
        "best-found-within-budget"
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::write(path, e.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn write_records_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RECORDS_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.instance_id.clone(),
            r.n.to_string(),
            r.k.to_string(),
            r.heuristic.tag().to_string(),
            opt(r.sharpe),
            opt(r.performance_pct),
            opt(r.hit_count),
            r.wall_time_s.to_string(),
            r.oracle_exhausted.to_string(),
            r.jitter.to_string(),
            r.dominance.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// One JSON object per record, carrying the config hash and seed so every
/// line can be traced back to the run that produced it.
pub fn records_jsonl(run: &BenchRun) -> String {
    let mut out = String::new();
    for r in &run.records {
        let mut v = serde_json::to_value(r).expect("record serializes");
        let obj = v.as_object_mut().expect("record is an object");
        obj.insert("config_hash".into(), json!(run.config_hash));
        obj.insert("seed".into(), json!(run.config.seed));
        obj.insert("hit_pct".into(), json!(r.hit_pct()));
        obj.insert(
            "denominator".into(),
            if r.performance_pct.is_some() {
                json!(denominator(r.oracle_exhausted))
            } else {
                Value::Null
            },
        );
        out.push_str(&serde_json::to_string(&v).expect("value serializes"));
        out.push('\n');
    }
    out
}

fn instances(records: &[BenchRecord]) -> Vec<(&str, usize)> {
    let mut seen = Vec::new();
    for r in records {
        if !seen.iter().any(|(id, _)| *id == r.instance_id.as_str()) {
            seen.push((r.instance_id.as_str(), r.n));
        }
    }
    seen
}

fn grid_axes<'a>(
    records: &'a [BenchRecord],
    id: &str,
) -> (Vec<usize>, Vec<Heuristic>, Vec<&'a BenchRecord>) {
    let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.instance_id == id).collect();
    let ks: Vec<usize> = rows
        .iter()
        .map(|r| r.k)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut hs: Vec<Heuristic> = Vec::new();
    for r in &rows {
        if !hs.contains(&r.heuristic) {
            hs.push(r.heuristic);
        }
    }
    hs.sort_by_key(|h| heuristic_rank(*h));
    (ks, hs, rows)
}

const COL: usize = 14;

/// Time on the first line of each cell, performance on the second.
pub fn table_time_performance(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    for (id, n) in instances(records) {
        let (ks, hs, rows) = grid_axes(records, id);
        let exhausted = rows.iter().all(|r| r.oracle_exhausted);
        let has_oracle = rows.iter().any(|r| r.heuristic == Heuristic::Exact);
        let _ = write!(out, "{id} (n = {n})");
        if has_oracle {
            let _ = write!(out, ", performance relative to {}", denominator(exhausted));
        }
        out.push('\n');
        let _ = write!(out, "{:<8}", "");
        for k in &ks {
            let _ = write!(out, "{:>COL$}", format!("k={k}"));
        }
        out.push('\n');
        for h in &hs {
            let cell = |k: usize| rows.iter().find(|r| r.k == k && r.heuristic == *h);
            let _ = write!(out, "{:<8}", h.tag());
            for &k in &ks {
                let text = match cell(k) {
                    Some(r) if r.failed() => "failed".to_string(),
                    Some(r) => format!("{:.3e}s", r.wall_time_s),
                    None => "-".into(),
                };
                let _ = write!(out, "{text:>COL$}");
            }
            out.push('\n');
            let _ = write!(out, "{:<8}", "");
            for &k in &ks {
                let text = match cell(k).and_then(|r| r.performance_pct) {
                    Some(p) => format!("{p:.2}%"),
                    None => "-".into(),
                };
                let _ = write!(out, "{text:>COL$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Hit counts as `hits/k`, one row per heuristic.
pub fn table_hits(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    for (id, n) in instances(records) {
        let (ks, hs, rows) = grid_axes(records, id);
        let _ = writeln!(out, "{id} (n = {n}), assets shared with the exact support");
        let _ = write!(out, "{:<8}", "");
        for k in &ks {
            let _ = write!(out, "{:>8}", format!("k={k}"));
        }
        out.push('\n');
        for h in hs.iter().filter(|h| **h != Heuristic::Exact) {
            let _ = write!(out, "{:<8}", h.tag());
            for &k in &ks {
                let text = rows
                    .iter()
                    .find(|r| r.k == k && r.heuristic == *h)
                    .and_then(|r| r.hit_count)
                    .map(|c| format!("{c}/{k}"))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, "{text:>8}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Time against performance, for a scatter plot.
pub fn write_scatter_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "instance_id",
        "k",
        "heuristic",
        "wall_time_s",
        "performance_pct",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in records.iter().filter(|r| !r.failed()) {
        w.write_record([
            r.instance_id.clone(),
            r.k.to_string(),
            r.heuristic.tag().to_string(),
            r.wall_time_s.to_string(),
            opt(r.performance_pct),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Paths written by [`write_bench_outputs`].
#[derive(Debug, Clone)]
pub struct BenchFiles {
    pub records_csv: PathBuf,
    pub records_jsonl: PathBuf,
    pub table_performance: PathBuf,
    pub table_hits: PathBuf,
    pub scatter_csv: PathBuf,
}

impl BenchFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            records_csv: dir.join("records.csv"),
            records_jsonl: dir.join("records.jsonl"),
            table_performance: dir.join("table_performance.txt"),
            table_hits: dir.join("table_hits.txt"),
            scatter_csv: dir.join("scatter.csv"),
        }
    }
}

pub fn write_bench_outputs(dir: &Path, run: &BenchRun) -> Result<BenchFiles> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let files = BenchFiles::in_dir(dir);
    write_records_csv(&files.records_csv, &run.records)?;
    write_text(&files.records_jsonl, &records_jsonl(run))?;
    write_text(
        &files.table_performance,
        &table_time_performance(&run.records),
    )?;
    let has_oracle = run.records.iter().any(|r| r.heuristic == Heuristic::Exact);
    if has_oracle {
        write_text(&files.table_hits, &table_hits(&run.records))?;
    }
    write_scatter_csv(&files.scatter_csv, &run.records)?;
    Ok(files)
}

pub fn write_sweep_outputs(dir: &Path, result: &SweepResult) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
    w.write_record(SWEEP_HEADER)
        .map_err(|e| csv_err(&csv_path, e))?;
    for c in &result.cells {
        w.write_record([
            c.rho.to_string(),
            c.seed.to_string(),
            c.dominance.to_string(),
            opt(c.performance_pct),
            c.oracle_exhausted.to_string(),
        ])
        .map_err(|e| csv_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::write(&csv_path, e))?;

    let summary_path = dir.join("sweep_summary.json");
    let summary = json!({
        "ks": result.ks,
        "correlation": result.correlation,
        "per_rho": result.per_rho,
        "denominator": denominator(true),
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(&summary_path, &text)?;
    Ok((csv_path, summary_path))
}
