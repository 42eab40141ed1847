//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio::{
    load_panel, read_records, synth_panel, write_dm_tables, write_panel, write_reports,
    ReportBundle, SynthConfig,
};
use crate::domain::{ForecastPanel, Method, MethodConfig, Mode};
use crate::error::{Error, Result};
use crate::evaluation::{
    compare_methods, evaluate_method, select_test_hours, sweep_k, sweep_q, LossSeries,
    DEFAULT_K_GRID, DEFAULT_Q_GRID, DEFAULT_TEST_HOURS,
};

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for runtime failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "probstack",
    version,
    about = "Quantile forecasts from stacked point forecasts: QRF, QRS and QLR meta-learners"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic forecast panels as CSV files.
    Synth(SynthArgs),
    /// Backtest meta-learners on every series and write report tables.
    Evaluate(EvaluateArgs),
    /// Sweep the neighbourhood size k or the QRF minimum leaf size q.
    Sweep(SweepArgs),
    /// Diebold-Mariano comparison from a stored records.csv.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Panel CSV files (`timestamp,actual,<models...>`); may be repeated.
    #[arg(long = "input", value_name = "FILE", num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// JSON file holding one synthetic panel config or a list of them.
    #[arg(long = "synth-config", value_name = "FILE")]
    pub synth_config: Option<PathBuf>,
    /// Use the built-in 10-series synthetic benchmark.
    #[arg(long)]
    pub benchmark: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Qrs,
    Qlr,
    Qrf,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Qrs => Method::Qrs,
            MethodArg::Qlr => Method::Qlr,
            MethodArg::Qrf => Method::Qrf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    K,
    Q,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Meta-learner; repeat for several (default: all three, QRF only for a q sweep).
    #[arg(long = "method", value_enum)]
    pub methods: Vec<MethodArg>,
    /// Forecast horizon h: patterns up to t - h train the model for hour t.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Number of test hours per series.
    #[arg(long, default_value_t = DEFAULT_TEST_HOURS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub hours: u64,
    /// Base seed; per-hour seeds are derived from it, the series id and the hour.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Trees per forest.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trees: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub source: SynthSource,
    /// Seed for the built-in benchmark suite.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the panel CSV files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SynthSource {
    /// JSON file holding one synthetic panel config or a list of them.
    #[arg(long = "synth-config", value_name = "FILE")]
    pub synth_config: Option<PathBuf>,
    /// Generate the built-in 10-series benchmark.
    #[arg(long)]
    pub benchmark: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training mode.
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    /// Neighbours used in local mode.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// QRF minimum leaf size (QRS always grows trees to purity).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: Option<u64>,
}

fn parse_grid_value(s: &str) -> std::result::Result<usize, String> {
    s.trim()
        .parse::<usize>()
        .ok()
        .filter(|&x| x >= 1)
        .ok_or_else(|| format!("invalid grid value {s:?}: expected a positive integer"))
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Swept hyperparameter.
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated grid values (default: the standard grid of the axis).
    #[arg(long, value_delimiter = ',', value_parser = parse_grid_value)]
    pub grid: Vec<usize>,
    /// Training mode for q sweeps.
    #[arg(long, value_enum, default_value_t = ModeArg::Global)]
    pub mode: ModeArg,
    /// Neighbours for a local-mode q sweep.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory containing a records.csv written by `evaluate`.
    #[arg(long, value_name = "DIR")]
    pub records: PathBuf,
    /// Output directory for dm.csv and dm_wins.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli) -> std::result::Result<Vec<PathBuf>, Failure> {
    match &cli.command {
        Command::Synth(a) => Ok(synth(a)?),
        Command::Evaluate(a) => with_jobs(a.common.jobs, || evaluate(a)),
        Command::Sweep(a) => with_jobs(a.common.jobs, || sweep(a)),
        Command::Compare(a) => Ok(compare(a)?),
    }
}

fn with_jobs<F>(jobs: Option<u64>, f: F) -> std::result::Result<Vec<PathBuf>, Failure>
where
    F: FnOnce() -> std::result::Result<Vec<PathBuf>, Failure> + Send,
{
    match jobs {
        None => f(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j as usize)
            .build()
            .map_err(|e| Failure::Run(Error::invalid(format!("thread pool: {e}"))))?
            .install(f),
    }
}

fn read_synth_configs(path: &Path) -> Result<Vec<SynthConfig>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json_err = |e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    if value.is_array() {
        serde_json::from_value(value).map_err(json_err)
    } else {
        Ok(vec![serde_json::from_value(value).map_err(json_err)?])
    }
}

fn synth_configs(file: Option<&Path>, benchmark: bool, seed: u64) -> Result<Vec<SynthConfig>> {
    match file {
        Some(path) => read_synth_configs(path),
        None => {
            debug_assert!(benchmark);
            Ok(SynthConfig::benchmark_suite(seed))
        }
    }
}

fn load_panels(source: &Source, seed: u64) -> Result<Vec<ForecastPanel>> {
    if !source.input.is_empty() {
        return source.input.iter().map(load_panel).collect();
    }
    synth_configs(source.synth_config.as_deref(), source.benchmark, seed)?
        .iter()
        .map(synth_panel)
        .collect()
}

fn synth(a: &SynthArgs) -> Result<Vec<PathBuf>> {
    let configs = synth_configs(a.source.synth_config.as_deref(), a.source.benchmark, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut written = Vec::new();
    for c in &configs {
        let panel = synth_panel(c)?;
        let path = a.out.join(format!("{}.csv", c.series_id));
        write_panel(&panel, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn methods(common: &CommonArgs) -> Vec<Method> {
    if common.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        let mut m: Vec<Method> = Vec::new();
        for &arg in &common.methods {
            if !m.contains(&arg.into()) {
                m.push(arg.into());
            }
        }
        m
    }
}

fn mode(mode: ModeArg, k: Option<u64>) -> std::result::Result<Mode, Failure> {
    match (mode, k) {
        (ModeArg::Global, None) => Ok(Mode::Global),
        (ModeArg::Global, Some(_)) => Err(Failure::Usage("--k requires --mode local".into())),
        (ModeArg::Local, Some(k)) => Ok(Mode::Local { k: k as usize }),
        (ModeArg::Local, None) => Err(Failure::Usage("--mode local requires --k".into())),
    }
}

fn base_config(method: Method, mode: Mode, common: &CommonArgs) -> MethodConfig {
    MethodConfig::new(method, mode)
        .with_seed(common.seed)
        .with_trees(common.trees as usize)
        .with_horizon(common.horizon as usize)
}

fn evaluate(a: &EvaluateArgs) -> std::result::Result<Vec<PathBuf>, Failure> {
    let mode = mode(a.mode, a.k)?;
    let panels = load_panels(&a.source, a.common.seed)?;
    let mut bundle = ReportBundle::default();
    for panel in &panels {
        let hours = select_test_hours(panel, a.common.hours as usize)?;
        for method in methods(&a.common) {
            let mut config = base_config(method, mode, &a.common);
            if let (Method::Qrf, Some(q)) = (method, a.q) {
                config = config.with_min_leaf(q as usize);
            }
            bundle.add_evaluation(&evaluate_method(panel, &config, &hours)?)?;
        }
    }
    let comparison = compare_methods(&bundle.loss_series())?;
    bundle.set_comparison(&comparison);
    Ok(write_reports(&bundle, &a.common.out)?)
}

fn sweep(a: &SweepArgs) -> std::result::Result<Vec<PathBuf>, Failure> {
    let grid: &[usize] = match (a.grid.is_empty(), a.axis) {
        (false, _) => &a.grid,
        (true, AxisArg::K) => &DEFAULT_K_GRID,
        (true, AxisArg::Q) => &DEFAULT_Q_GRID,
    };
    let methods = match a.axis {
        AxisArg::Q if a.common.methods.is_empty() => vec![Method::Qrf],
        _ => methods(&a.common),
    };
    let mode = match a.axis {
        AxisArg::K => {
            if a.k.is_some() || a.mode == ModeArg::Local {
                return Err(Failure::Usage(
                    "a k sweep sets the mode itself; drop --mode/--k".into(),
                ));
            }
            Mode::Global
        }
        AxisArg::Q => {
            if methods.contains(&Method::Qlr) {
                return Err(Failure::Usage("a q sweep applies to forest methods only".into()));
            }
            mode(a.mode, a.k)?
        }
    };
    let panels = load_panels(&a.source, a.common.seed)?;
    let mut bundle = ReportBundle::default();
    for panel in &panels {
        let hours = select_test_hours(panel, a.common.hours as usize)?;
        for &method in &methods {
            let base = base_config(method, mode, &a.common);
            let result = match a.axis {
                AxisArg::K => sweep_k(panel, &base, grid, &hours)?,
                AxisArg::Q => sweep_q(panel, &base, grid, &hours)?,
            };
            bundle.add_sweep(&result);
        }
    }
    Ok(write_reports(&bundle, &a.common.out)?)
}

fn compare(a: &CompareArgs) -> Result<Vec<PathBuf>> {
    let stored = ReportBundle {
        records: read_records(&a.records)?,
        ..ReportBundle::default()
    };
    let losses: Vec<LossSeries> = stored.loss_series();
    let mut bundle = ReportBundle::default();
    bundle.set_comparison(&compare_methods(&losses)?);
    write_dm_tables(&bundle, &a.out)
}
