//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every check prints its own PASS/FAIL line; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use oscar_bench::{cmd_bench, BenchArgs, KSpec, SourceArgs};
use oscar_core::metrics::performance_ratio;
use oscar_core::oracle::{solve_exact, DEFAULT_BUDGET};
use oscar_core::select::{oscar_order, select, select_backward, select_oscar, select_topk_weight};
use oscar_core::spd::{cholesky, transform_by_lt};
use oscar_core::synth::{dominance_sweep, generate, SweepConfig};
use oscar_core::tangent::{angle_to, sharpe, solve_tangent};
use oscar_core::{Heuristic, MomentEstimate, Structure, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn factor_instance(n: usize, seed: u64) -> MomentEstimate {
    generate(&SynthSpec {
        n,
        structure: Structure::random_factor(3),
        mu_range: (-0.05, 0.15),
        seed,
    })
    .unwrap()
}

fn diagonal_instance(n: usize, seed: u64) -> MomentEstimate {
    generate(&SynthSpec {
        n,
        structure: Structure::Diagonal {
            vol_range: (0.1, 0.4),
        },
        mu_range: (-0.05, 0.15),
        seed,
    })
    .unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn scale_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let n = rng.random_range(3..=20);
        let m = factor_instance(n, 1000 + inst);
        let mut checked = 0;
        while checked < 100 {
            let w = random_weights(&mut rng, n);
            let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
            let (Ok(a), Ok(b)) = (sharpe(&w, &m), sharpe(&(&w * lambda), &m)) else {
                continue;
            };
            let (a, b) = (a.value(), b.value());
            let excess = (b - a).abs() / (1.0 + a.abs());
            worst = worst.max(excess);
            if excess > 1e-12 {
                return Err(format!(
                    "instance {inst}: |ΔSR| = {:e} at λ = {lambda}",
                    (b - a).abs()
                ));
            }
            checked += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "10000 pairs, worst relative deviation {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn angle_ordering() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs = 0;
    for inst in 0..50 {
        let n = rng.random_range(3..=20);
        let m = factor_instance(n, 2000 + inst);
        let factor = cholesky(m.sigma()).unwrap();
        let tangent = solve_tangent(&m).unwrap();
        let draw = |rng: &mut ChaCha8Rng| loop {
            let w = random_weights(rng, n);
            if let Ok(s) = sharpe(&w, &m) {
                if s.value() > 0.0 {
                    let theta = angle_to(&w, tangent.weights(), &factor).unwrap();
                    return (s.value(), theta);
                }
            }
        };
        for _ in 0..200 {
            let (sa, ta) = draw(&mut rng);
            let (sb, tb) = draw(&mut rng);
            if sa.partial_cmp(&sb) != tb.partial_cmp(&ta) {
                return Err(format!(
                    "instance {inst}: SR {sa} vs {sb} but angles {ta} vs {tb}"
                ));
            }
            pairs += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{pairs} pairs consistent, {:.2?}", start.elapsed()))
}

fn prefix_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut subsets = 0u64;
    for inst in 0..50 {
        let n = rng.random_range(2..=12);
        let m = factor_instance(n, 3000 + inst);
        let factor = cholesky(m.sigma()).unwrap();
        let z = transform_by_lt(&factor, solve_tangent(&m).unwrap().weights()).unwrap();
        let order = oscar_order(&m).unwrap();
        let mut best = vec![0.0f64; n + 1];
        for mask in 1u32..(1 << n) {
            let k = mask.count_ones() as usize;
            let mass: f64 = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| z[i] * z[i])
                .sum();
            best[k] = best[k].max(mass.sqrt());
            subsets += 1;
        }
        for (k, &top) in best.iter().enumerate().skip(1) {
            let ours: f64 = order
                .prefix(k)
                .iter()
                .map(|&i| z[i] * z[i])
                .sum::<f64>()
                .sqrt();
            if ours < top - 1e-10 {
                return Err(format!(
                    "instance {inst}, k = {k}: prefix {ours} < best {top}"
                ));
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{subsets} subsets compared, {:.2?}",
        start.elapsed()
    ))
}

fn diagonal_instances() -> Vec<MomentEstimate> {
    (0..100u64)
        .map(|i| diagonal_instance(2 + (i as usize % 13), 4000 + i))
        .collect()
}

fn diagonal_exactness() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    for (inst, m) in diagonal_instances().iter().enumerate() {
        for k in 1..=m.n() {
            let o = solve_exact(m, k, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
            if !o.exhausted {
                return Err(format!(
                    "instance {inst}, k = {k}: exact search not exhausted"
                ));
            }
            let p = select_oscar(m, k).map_err(|e| e.to_string())?;
            if p.support != o.best.support || p.sharpe.to_bits() != o.best.sharpe.to_bits() {
                return Err(format!(
                    "instance {inst}, k = {k}: {:?}/{} vs exact {:?}/{}",
                    p.support, p.sharpe, o.best.support, o.best.sharpe
                ));
            }
            cells += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{cells} (instance, k) cells identical, {:.2?}",
        start.elapsed()
    ))
}

fn oracle_dominance() -> Outcome {
    let start = Instant::now();
    let mut sums = [0.0f64; 5];
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..30 {
        let m = factor_instance(14, seed);
        let o = solve_exact(&m, 4, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
        if !o.exhausted {
            return Err(format!("seed {seed}: exact search not exhausted"));
        }
        for (j, h) in Heuristic::SELECTORS.iter().enumerate() {
            let p = select(&m, 4, *h).map_err(|e| e.to_string())?;
            let perf = performance_ratio(p.sharpe, o.best.sharpe).map_err(|e| e.to_string())?;
            worst = worst.max(perf);
            if perf > 100.0 + 1e-6 {
                return Err(format!("seed {seed}: {h} at {perf}%"));
            }
            sums[j] += perf;
        }
    }
    let means: Vec<String> = Heuristic::SELECTORS
        .iter()
        .zip(sums)
        .map(|(h, s)| format!("{h} {:.2}%", s / 30.0))
        .collect();
    let oscar = sums[4] / 30.0;
    within(start.elapsed(), Duration::from_secs(300))?;
    if oscar < 85.0 {
        return Err(format!(
            "OSCAR mean {oscar:.2}% < 85% ({})",
            means.join(", ")
        ));
    }
    Ok(format!(
        "max ratio {worst:.6}%, means {}, {:.2?}",
        means.join(", "),
        start.elapsed()
    ))
}

fn prefix_nesting() -> Outcome {
    let mut checked = 0;
    for (inst, m) in diagonal_instances().iter().enumerate() {
        let mut prev: Vec<usize> = Vec::new();
        for k in 1..=m.n() {
            let s = select_oscar(m, k).map_err(|e| e.to_string())?.support;
            if !prev.iter().all(|i| s.contains(i)) {
                return Err(format!("instance {inst}: {prev:?} not inside {s:?}"));
            }
            prev = s;
            checked += 1;
        }
    }
    Ok(format!("{checked} nested supports"))
}

fn min_time(reps: usize, mut f: impl FnMut() -> Duration) -> Duration {
    (0..reps).map(|_| f()).min().unwrap()
}

fn timing() -> Outcome {
    let m = factor_instance(200, 7);
    let k = 20;
    let oscar = min_time(7, || select_oscar(&m, k).unwrap().wall_time);
    let weight = min_time(7, || select_topk_weight(&m, k).unwrap().wall_time);
    let backward = min_time(3, || select_backward(&m, k).unwrap().wall_time);
    let speedup = backward.as_secs_f64() / oscar.as_secs_f64();
    let vs_w = oscar.as_secs_f64() / weight.as_secs_f64();
    let line = format!("OSCAR {oscar:.2?}, W {weight:.2?}, B {backward:.2?}: B/OSCAR = {speedup:.0}x, OSCAR/W = {vs_w:.2}");
    if speedup >= 10.0 && vs_w <= 5.0 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn dominance_sign() -> Outcome {
    let start = Instant::now();
    let config = SweepConfig::new(14, vec![4], vec![0.0, 0.3, 0.6, 0.9], 30);
    let result = dominance_sweep(&config).map_err(|e| e.to_string())?;
    let excluded: usize = result.per_rho.iter().map(|r| r.excluded).sum();
    if excluded > 0 {
        return Err(format!(
            "{excluded} cells without an exhausted exact search"
        ));
    }
    let mean = |rho: f64| {
        result
            .per_rho
            .iter()
            .find(|r| r.rho == rho)
            .and_then(|r| r.mean_performance_pct)
            .unwrap_or(f64::NAN)
    };
    let (lo, hi) = (mean(0.0), mean(0.9));
    let r = result.correlation.unwrap_or(f64::NAN);
    within(start.elapsed(), Duration::from_secs(600))?;
    let line = format!(
        "correlation {r:.4}, mean performance {lo:.2}% at rho 0 vs {hi:.2}% at rho 0.9, {:.2?}",
        start.elapsed()
    );
    if r > 0.0 && lo > hi {
        Ok(line)
    } else {
        Err(line)
    }
}

fn bench_args(synth: &str, out: &Path) -> BenchArgs {
    BenchArgs {
        source: SourceArgs {
            input: None,
            synth: Some(synth.parse().unwrap()),
        },
        k: vec![],
        k_frac: vec![],
        heuristics: "all".into(),
        oracle: false,
        oracle_budget: 300.0,
        rf: 0.0,
        seed: 0,
        jobs: 1,
        out: out.to_path_buf(),
        strict: false,
        force: false,
    }
}

fn k_resolution() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut args = bench_args("diagonal:n=47", dir.path());
    args.k_frac = vec![0.05, 0.10, 0.15, 0.20];
    args.heuristics = "OSCAR".into();
    let direct = KSpec::Fractions(args.k_frac.clone())
        .resolve(47)
        .map_err(|e| e.to_string())?;
    let run = cmd_bench(&args).map_err(|e| e.to_string())?;
    let ks: Vec<usize> = run.records.iter().map(|r| r.k).collect();
    if direct == [3, 5, 8, 10] && ks == [3, 5, 8, 10] {
        Ok(format!("n = 47 -> k = {ks:?}"))
    } else {
        Err(format!("resolved {direct:?}, records {ks:?}"))
    }
}

/// Drops the named CSV column.
fn without_column(csv_text: &str, column: &str) -> String {
    let header: Vec<&str> = csv_text.lines().next().unwrap_or("").split(',').collect();
    let drop = header.iter().position(|h| *h == column);
    csv_text
        .lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != drop)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn without_json_time(jsonl: &str) -> String {
    jsonl
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time_s");
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for (i, dir) in dirs.iter().enumerate() {
        let mut args = bench_args("factor:n=10,f=3,count=3", dir.path());
        args.k = vec![2, 4];
        args.oracle = true;
        args.seed = 42;
        args.jobs = 1 + 2 * i;
        cmd_bench(&args).map_err(|e| e.to_string())?;
        let read = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap();
        outputs.push([
            without_column(&read("records.csv"), "wall_time_s"),
            without_json_time(&read("records.jsonl")),
            without_column(&read("scatter.csv"), "wall_time_s"),
            read("table_hits.txt"),
        ]);
    }
    let names = [
        "records.csv",
        "records.jsonl",
        "scatter.csv",
        "table_hits.txt",
    ];
    for (j, name) in names.iter().enumerate() {
        if outputs[0][j] != outputs[1][j] {
            return Err(format!("{name} differs between runs"));
        }
    }
    let rows = outputs[0][0].lines().count() - 1;
    Ok(format!(
        "{rows} records identical across runs (1 and 3 workers)"
    ))
}

fn main() {
    let checks: [Check; 10] = [
        ("scale invariance of the Sharpe ratio", scale_invariance),
        ("Sharpe order equals reversed angle order", angle_ordering),
        (
            "ranking prefix maximizes transformed mass",
            prefix_optimality,
        ),
        ("diagonal covariance solved exactly", diagonal_exactness),
        (
            "exact search dominates; OSCAR mean >= 85%",
            oracle_dominance,
        ),
        ("supports nest as k grows", prefix_nesting),
        ("OSCAR >= 10x faster than B, within 5x of W", timing),
        ("dominance/performance correlation sign", dominance_sign),
        ("k fractions on 47 assets", k_resolution),
        ("bench output is deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
