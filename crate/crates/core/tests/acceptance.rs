//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance --release` for timings
//! close to an optimised build.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use common::metric_cases::{closed_form_checks, random_forecasts, rescaling_deviation};
use common::*;
use probstack::dataio::{synth_panel, SynthConfig};
use probstack::evaluation::{
    compare_methods, evaluate_method_observed, select_test_hours, EvaluationResult, FitObserver,
    LossSeries,
};
use probstack::qlr::{fit_qlr, fit_qlr_path, qlr_objective};
use probstack::qrf::qrf_quantiles;
use probstack::{fit_forest, ForecastPanel, Method, MethodConfig, Mode, QuantileGrid, TrainingSet};
use rand::Rng;

const BENCHMARK_SEED: u64 = 0;
const TEST_HOURS: usize = 100;

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn report(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        if !ok {
            self.failures += 1;
        }
        println!("[{tag}] {id}. {name}: {detail}");
    }
}

fn qrf_oracle() -> (bool, String) {
    let grid = Arc::new(QuantileGrid::standard());
    let started = Instant::now();
    let mut mismatches = 0;
    let mut queries = 0;
    for seed in 0..200 {
        let fx = forest_fixture(50_000 + seed);
        let forest = fit_forest(&fx.train, &fx.params).unwrap();
        for q in &fx.queries {
            queries += 1;
            let got = qrf_quantiles(&forest, q, &grid).unwrap();
            if got.values() != brute_qrf_quantiles(&forest, &fx.train, q).as_slice() {
                mismatches += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    (
        mismatches == 0 && secs < 10.0,
        format!("200 fixtures, {queries} queries, {mismatches} mismatches, {secs:.2} s (limit 10 s)"),
    )
}

fn qlr_oracle() -> (bool, String) {
    let started = Instant::now();
    let mut r = rng(4242);
    let targets: Vec<f64> = (0..100).map(|_| r.random_range(-500.0..500.0)).collect();
    let train = TrainingSet::new(0, vec![], targets.clone(), (0..100).collect()).unwrap();
    let mut sorted = targets;
    sorted.sort_by(f64::total_cmp);
    let grid = QuantileGrid::standard();
    let mut worst_intercept: f64 = 0.0;
    for (c, &h) in fit_qlr_path(&train, &grid).unwrap().iter().zip(grid.hundredths()) {
        let (lo, hi) = empirical_quantile_interval(&sorted, h);
        let gap = (lo - c.intercept).max(c.intercept - hi).max(0.0);
        worst_intercept = worst_intercept.max(gap);
    }

    let mut worst_rel: f64 = 0.0;
    let mut fits = 0;
    for _ in 0..300 {
        let n = r.random_range(2..=8);
        let xs: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..6))).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -x + r.random_range(-4.0..4.0)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let train = TrainingSet::from_rows(&rows, &ys).unwrap();
        let scale: f64 = ys.iter().map(|y| y.abs()).sum();
        for &alpha in &[0.01, 0.05, 0.2, 0.5, 0.63, 0.9, 0.99] {
            fits += 1;
            let got = qlr_objective(&train, &fit_qlr(&train, alpha).unwrap());
            let want = enumerate_line_objective(&xs, &ys, alpha);
            worst_rel = worst_rel.max((got - want).abs() / want.max(1e-6 * scale));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    (
        worst_intercept <= 1e-6 && worst_rel <= 1e-8 && secs < 30.0,
        format!(
            "intercept-only max gap {worst_intercept:.2e} (limit 1e-6); {fits} line fits, \
             max relative objective error {worst_rel:.2e} (limit 1e-8); {secs:.2} s (limit 30 s)"
        ),
    )
}

fn metric_suite() -> (bool, String) {
    let checks = closed_form_checks();
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let (actuals, qfs) = random_forecasts(99, 300);
    let worst = [0.5, 2.0, 10.0]
        .iter()
        .map(|&c| rescaling_deviation(&actuals, &qfs, c))
        .fold(0.0, f64::max);
    (
        failed.is_empty() && worst <= 1e-9,
        format!(
            "{}/{} closed-form examples exact{}; rescaling max relative deviation {worst:.2e} (limit 1e-9)",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
    )
}

/// Records every fit whose training set reaches past `hour - horizon`.
struct LeakageAudit {
    fits: AtomicUsize,
    violations: Mutex<Vec<String>>,
}

impl FitObserver for LeakageAudit {
    fn observe(&self, series_id: &str, hour: usize, horizon: usize, train: &TrainingSet) {
        self.fits.fetch_add(1, Ordering::Relaxed);
        let limit = hour.checked_sub(horizon);
        let max = train.time_indices().iter().copied().max();
        let leaked = match (max, limit) {
            (Some(m), Some(l)) => m > l,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if leaked {
            self.violations
                .lock()
                .unwrap()
                .push(format!("{series_id} hour {hour}: max index {max:?}, horizon {horizon}"));
        }
    }
}

struct SeriesRun {
    qrf: EvaluationResult,
    qrs: EvaluationResult,
    qlr: EvaluationResult,
    qlr_k20: EvaluationResult,
}

struct Benchmark {
    series: Vec<SeriesRun>,
    calibration_seconds: f64,
    total_seconds: f64,
}

fn run(
    panel: &ForecastPanel,
    config: &MethodConfig,
    hours: &[usize],
    audit: &LeakageAudit,
) -> EvaluationResult {
    evaluate_method_observed(panel, config, hours, audit)
        .unwrap_or_else(|e| panic!("{} on {}: {e}", config.label(), panel.series_id()))
}

fn benchmark(audit: &LeakageAudit) -> Benchmark {
    let qrf = MethodConfig::new(Method::Qrf, Mode::Global);
    let qrs = MethodConfig::new(Method::Qrs, Mode::Global);
    let qlr = MethodConfig::new(Method::Qlr, Mode::Global);
    let qlr_k20 = MethodConfig::new(Method::Qlr, Mode::Local { k: 20 });
    let started = Instant::now();
    let mut calibration_seconds = 0.0;
    let mut series = Vec::new();
    for config in SynthConfig::benchmark_suite(BENCHMARK_SEED) {
        let panel = synth_panel(&config).unwrap();
        let hours = select_test_hours(&panel, TEST_HOURS).unwrap();
        let qrf = run(&panel, &qrf, &hours, audit);
        let qlr = run(&panel, &qlr, &hours, audit);
        calibration_seconds += qrf.runtime.wall_seconds + qlr.runtime.wall_seconds;
        let run = SeriesRun {
            qrs: run(&panel, &qrs, &hours, audit),
            qlr_k20: run(&panel, &qlr_k20, &hours, audit),
            qrf,
            qlr,
        };
        println!(
            "    {}: QRF MARFE {:.4} inPI {:.0} MPWS {:.2} | QLR MARFE {:.4} MPQRE {:.3} | \
             QLR k=20 MPQRE {:.3} | QRS inPI {:.0} MPWS {:.2}",
            config.series_id,
            run.qrf.report.marfe,
            run.qrf.report.in_pi,
            run.qrf.report.mpws,
            run.qlr.report.marfe,
            run.qlr.report.mpqre,
            run.qlr_k20.report.mpqre,
            run.qrs.report.in_pi,
            run.qrs.report.mpws,
        );
        series.push(run);
    }
    Benchmark {
        series,
        calibration_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn calibration(b: &Benchmark) -> (bool, String) {
    let qrf_worst = b.series.iter().map(|s| s.qrf.report.marfe).fold(0.0, f64::max);
    let qlr_worst = b.series.iter().map(|s| s.qlr.report.marfe).fold(0.0, f64::max);
    let ok = qrf_worst <= 0.06 && qlr_worst <= 0.06 && b.calibration_seconds < 600.0;
    (
        ok,
        format!(
            "{} series: worst MARFE QRF {qrf_worst:.4}, QLR {qlr_worst:.4} (limit 0.06); \
             mean QRF {:.4}, QLR {:.4}; QRF+QLR runtime {:.0} s (limit 600 s)",
            b.series.len(),
            mean(b.series.iter().map(|s| s.qrf.report.marfe)),
            mean(b.series.iter().map(|s| s.qlr.report.marfe)),
            b.calibration_seconds
        ),
    )
}

fn undercoverage(b: &Benchmark) -> (bool, String) {
    let qrs = mean(b.series.iter().map(|s| s.qrs.report.in_pi));
    let qrf = mean(b.series.iter().map(|s| s.qrf.report.in_pi));
    let (lo, hi) = b
        .series
        .iter()
        .map(|s| s.qrf.report.in_pi)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    (
        qrs < 80.0 && 80.0 < qrf && (qrf - 90.0).abs() <= 3.0,
        format!("benchmark inPI QRS {qrs:.2} < 80 < QRF {qrf:.2}, |QRF - 90| <= 3 (QRF per-series range {lo:.0}..{hi:.0})"),
    )
}

fn ordering(b: &Benchmark) -> (bool, String) {
    let sharper = b
        .series
        .iter()
        .filter(|s| s.qrf.report.mpws < s.qrs.report.mpws)
        .count();
    let losses: Vec<LossSeries> = b
        .series
        .iter()
        .flat_map(|s| [LossSeries::from(&s.qrf), LossSeries::from(&s.qrs)])
        .collect();
    let cmp = compare_methods(&losses).unwrap();
    let qrf = b.series[0].qrf.config.label();
    let qrs = b.series[0].qrs.config.label();
    let wins = cmp.wins_of(&qrf, &qrs).unwrap();
    let losses_back = cmp.wins_of(&qrs, &qrf).unwrap();
    let n = b.series.len();
    (
        sharper >= 9 && 2 * wins > n,
        format!(
            "MPWS(QRF) < MPWS(QRS) on {sharper}/{n} (need 9); DM wins QRF over QRS {wins}/{n}, \
             QRS over QRF {losses_back}/{n}"
        ),
    )
}

fn local_vs_global(b: &Benchmark) -> (bool, String) {
    let worse = b
        .series
        .iter()
        .filter(|s| s.qlr_k20.report.mpqre > s.qlr.report.mpqre)
        .count();
    (
        worse == b.series.len(),
        format!(
            "MPQRE k=20 above global on {worse}/{} series; mean {:.3} vs {:.3}",
            b.series.len(),
            mean(b.series.iter().map(|s| s.qlr_k20.report.mpqre)),
            mean(b.series.iter().map(|s| s.qlr.report.mpqre)),
        ),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_probstack"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let attempt = || -> Result<(usize, usize), String> {
        let configs = vec![small_config("east", 40, 5), small_config("west", 40, 6)];
        let cfg = root.join("synth.json");
        fs::write(&cfg, serde_json::to_string(&configs).unwrap()).unwrap();
        let panels = root.join("panels");
        cli(&["synth", "--synth-config", &s(&cfg), "--out", &s(&panels)])?;
        let east = s(&panels.join("east.csv"));
        let west = s(&panels.join("west.csv"));
        let jobs = ["1", "2", "4"];
        let mut runs = Vec::new();
        for j in jobs {
            let eval = root.join(format!("eval{j}"));
            cli(&[
                "evaluate", "--input", &east, "--input", &west, "--method", "qrf", "--method",
                "qrs", "--method", "qlr", "--hours", "8", "--trees", "10", "--seed", "31",
                "--jobs", j, "--out", &s(&eval),
            ])?;
            let local = root.join(format!("local{j}"));
            cli(&[
                "evaluate", "--input", &east, "--method", "qrf", "--method", "qlr", "--mode",
                "local", "--k", "120", "--hours", "6", "--trees", "10", "--seed", "31", "--jobs",
                j, "--out", &s(&local),
            ])?;
            let sweep = root.join(format!("sweep{j}"));
            cli(&[
                "sweep", "--input", &west, "--axis", "q", "--grid", "1,10", "--trees", "10",
                "--hours", "4", "--seed", "31", "--jobs", j, "--out", &s(&sweep),
            ])?;
            runs.push([dir_bytes(&eval), dir_bytes(&local), dir_bytes(&sweep)]);
        }
        let files: usize = runs[0].iter().map(Vec::len).sum();
        let differing = runs[1..].iter().filter(|r| **r != runs[0]).count();
        Ok((files, differing))
    };
    match attempt() {
        Ok((files, differing)) => (
            differing == 0,
            format!("evaluate, local evaluate and sweep with --jobs 1/2/4: {files} report files, {differing} runs differ"),
        ),
        Err(e) => (false, e),
    }
}

fn leakage(audit: &LeakageAudit, b: &Benchmark) -> (bool, String) {
    let fits = audit.fits.load(Ordering::Relaxed);
    let expected: usize = b.series.len() * 4 * TEST_HOURS;
    let violations = audit.violations.lock().unwrap();
    let recorded_ok = b.series.iter().all(|s| {
        [&s.qrf, &s.qrs, &s.qlr, &s.qlr_k20]
            .iter()
            .all(|r| r.records.iter().all(|rec| rec.train_max_index + r.config.horizon <= rec.hour))
    });
    let mut detail = format!("{fits} fits observed (expected {expected}), {} violations", violations.len());
    if let Some(first) = violations.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    (fits == expected && violations.is_empty() && recorded_ok, detail)
}

fn main() -> ExitCode {
    let mut outcome = Outcome { failures: 0 };
    let (ok, d) = qrf_oracle();
    outcome.report(1, "QRF matches brute force", ok, d);
    let (ok, d) = qlr_oracle();
    outcome.report(2, "QLR matches exhaustive optima", ok, d);
    let (ok, d) = metric_suite();
    outcome.report(3, "metric closed forms and rescaling", ok, d);

    println!("    running benchmark: 10 series x {TEST_HOURS} hours x 4 methods");
    let audit = LeakageAudit { fits: AtomicUsize::new(0), violations: Mutex::new(Vec::new()) };
    let b = benchmark(&audit);
    println!("    benchmark wall time {:.0} s", b.total_seconds);
    let (ok, d) = calibration(&b);
    outcome.report(4, "calibration of QRF and QLR", ok, d);
    let (ok, d) = undercoverage(&b);
    outcome.report(5, "QRS undercoverage", ok, d);
    let (ok, d) = ordering(&b);
    outcome.report(6, "QRF sharper and more accurate than QRS", ok, d);
    let (ok, d) = local_vs_global(&b);
    outcome.report(7, "local QLR at k=20 worse than global", ok, d);
    let (ok, d) = determinism();
    outcome.report(8, "CLI determinism across --jobs", ok, d);
    let (ok, d) = leakage(&audit, &b);
    outcome.report(9, "no training index beyond t - h", ok, d);

    if outcome.failures == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 9 criteria fail", outcome.failures);
        ExitCode::FAILURE
    }
}
