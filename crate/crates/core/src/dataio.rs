//! Panel CSV ingestion, synthetic panels and report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::domain::ForecastPanel;
use crate::error::{Error, Result};
use crate::evaluation::{Comparison, DmEntry, EvaluationResult, LossSeries, SweepResult};
use crate::metrics::{DMResult, ProbMetricsReport};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid timestamp {s:?}: {e}"))
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads `timestamp,actual,<model_1>,...` rows. The series id is the file stem.
pub fn load_panel(path: impl AsRef<Path>) -> Result<ForecastPanel> {
    let path = path.as_ref();
    let series_id = path
        .file_stem()
        .map_or_else(|| "series".to_string(), |s| s.to_string_lossy().into_owned());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let mut rows = reader.records();
    let header = rows
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing header"))?
        .map_err(|e| csv_error(path, e))?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "timestamp" || names[1] != "actual" {
        return Err(parse_error(
            path,
            1,
            "header must be `timestamp,actual,<model_1>,...`",
        ));
    }
    let model_names: Vec<String> = names[2..].iter().map(|s| s.to_string()).collect();
    let n = model_names.len();

    let mut timestamps: Vec<DateTime<Utc>> = Vec::new();
    let mut actuals = Vec::new();
    let mut forecasts = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.len() != n + 2 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} cells, found {}", n + 2, row.len()),
            ));
        }
        let ts = parse_timestamp(row[0].trim()).map_err(|m| parse_error(path, line, m))?;
        if let Some(prev) = timestamps.last() {
            if ts == *prev {
                return Err(parse_error(path, line, format!("duplicate timestamp {}", &row[0])));
            }
            if ts - *prev != Duration::hours(1) {
                return Err(parse_error(
                    path,
                    line,
                    format!("timestamp {} is not one hour after the previous row", &row[0]),
                ));
            }
        }
        timestamps.push(ts);
        for (c, cell) in row.iter().enumerate().skip(1) {
            let cell = cell.trim();
            let column = names[c];
            if cell.is_empty() {
                return Err(parse_error(path, line, format!("missing value in column {column}")));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, format!("invalid number {cell:?} in column {column}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line, format!("non-finite value in column {column}")));
            }
            if c == 1 {
                if v <= 0.0 {
                    return Err(parse_error(
                        path,
                        line,
                        format!("percentage metrics undefined for nonpositive load {v}"),
                    ));
                }
                actuals.push(v);
            } else {
                forecasts.push(v);
            }
        }
    }
    if timestamps.is_empty() {
        return Err(parse_error(path, 2, "panel has no data rows"));
    }
    ForecastPanel::new(series_id, timestamps, actuals, forecasts, model_names)
}

/// Writes a panel in the format read by [`load_panel`], with shortest
/// round-trip decimal rendering.
pub fn write_panel(panel: &ForecastPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["timestamp".to_string(), "actual".to_string()];
    header.extend(panel.model_names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for t in 0..panel.len() {
        let mut row = vec![format_timestamp(&panel.timestamps()[t]), panel.actual(t).to_string()];
        row.extend(panel.input(t).iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Synthetic load with daily, weekly and annual cycles plus AR(1) noise,
/// and base-model forecasts with multiplicative bias and additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub series_id: String,
    /// First hour, midnight UTC of this date.
    pub start: NaiveDate,
    pub days: usize,
    pub base_level: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub annual_amplitude: f64,
    pub ar1: f64,
    /// Stationary standard deviation of the AR(1) component.
    pub noise_std: f64,
    pub model_bias: Vec<f64>,
    pub model_noise_std: Vec<f64>,
    pub heavy_tail: Vec<bool>,
    /// Standard deviation of a load component no base model anticipates.
    #[serde(default)]
    pub common_noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn n_models(&self) -> usize {
        self.model_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model_bias.len();
        if n < 2 {
            return Err(Error::invalid("synthetic panels need at least two base models"));
        }
        if self.model_noise_std.len() != n || self.heavy_tail.len() != n {
            return Err(Error::invalid(
                "model_bias, model_noise_std and heavy_tail must have one entry per model",
            ));
        }
        if self.days == 0 {
            return Err(Error::invalid("days must be at least 1"));
        }
        if !(self.ar1 > -1.0 && self.ar1 < 1.0) {
            return Err(Error::invalid("ar1 coefficient must lie in (-1, 1)"));
        }
        let amps = [
            self.daily_amplitude,
            self.weekly_amplitude,
            self.annual_amplitude,
            self.noise_std,
            self.common_noise_std,
        ];
        if amps.iter().chain(&self.model_noise_std).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("amplitudes and noise levels must be finite and >= 0"));
        }
        if self.model_bias.iter().any(|b| !b.is_finite() || *b <= -1.0) {
            return Err(Error::invalid("model bias fractions must be finite and > -1"));
        }
        let floor = self.daily_amplitude
            + self.weekly_amplitude
            + self.annual_amplitude
            + 6.0 * (self.noise_std + self.common_noise_std);
        if !(self.base_level > floor) || !self.base_level.is_finite() {
            return Err(Error::invalid(format!(
                "base_level {} must exceed amplitudes + 6 * (noise_std + common_noise_std) = {floor}",
                self.base_level
            )));
        }
        Ok(())
    }

    /// Ten series with distinct levels, shapes and a mix of good, biased
    /// and heavy-tailed base models.
    pub fn benchmark_suite(seed: u64) -> Vec<SynthConfig> {
        (0..10)
            .map(|s| {
                let f = s as f64;
                let level = 5_000.0 + 4_000.0 * f;
                let model_bias = vec![0.0, 0.01, -0.015, 0.03, -0.04, 0.02, 0.0, -0.01];
                let rel_noise = [0.012, 0.018, 0.015, 0.025, 0.02, 0.03, 0.04, 0.022];
                SynthConfig {
                    series_id: format!("series{:02}", s + 1),
                    start: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
                    days: 730,
                    base_level: level,
                    daily_amplitude: level * (0.10 + 0.01 * f),
                    weekly_amplitude: level * (0.04 + 0.004 * f),
                    annual_amplitude: level * (0.12 - 0.006 * f),
                    ar1: 0.9 + 0.008 * f,
                    noise_std: level * 0.025,
                    model_bias,
                    model_noise_std: rel_noise.iter().map(|r| r * level).collect(),
                    heavy_tail: vec![false, false, false, true, false, false, true, false],
                    common_noise_std: level * COMMON_NOISE,
                    seed: crate::seed::derive(seed, &[s as u64]),
                }
            })
            .collect()
    }
}

const COMMON_NOISE: f64 = 0.025;

pub fn synth_panel(config: &SynthConfig) -> Result<ForecastPanel> {
    config.validate()?;
    let hours = config.days * 24;
    let start = config
        .start
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let t3 = StudentT::new(3.0).expect("df 3");
    let tau = std::f64::consts::TAU;
    let innovation = config.noise_std * (1.0 - config.ar1 * config.ar1).sqrt();
    let clamp = 6.0 * config.noise_std;

    let mut timestamps = Vec::with_capacity(hours);
    let mut actuals = Vec::with_capacity(hours);
    let mut forecasts = Vec::with_capacity(hours * config.n_models());
    let mut ar = config.noise_std * std_normal.sample(&mut rng);
    for t in 0..hours {
        let ts = start + Duration::hours(t as i64);
        let hour = f64::from(ts.hour());
        let weekday = f64::from(ts.weekday().num_days_from_monday());
        let day_of_year = f64::from(ts.ordinal0()) + hour / 24.0;
        // Evening peak, weekday/weekend contrast, winter peak.
        let daily = config.daily_amplitude * (tau * (hour - 18.0) / 24.0).cos();
        let weekly = config.weekly_amplitude * (tau * (weekday * 24.0 + hour - 60.0) / 168.0).cos();
        let annual = config.annual_amplitude * (tau * day_of_year / 365.25).cos();
        if t > 0 {
            ar = config.ar1 * ar + innovation * std_normal.sample(&mut rng);
        }
        ar = ar.clamp(-clamp, clamp);
        let anticipated = config.base_level + daily + weekly + annual + ar;
        let common = (config.common_noise_std * std_normal.sample(&mut rng))
            .clamp(-6.0 * config.common_noise_std, 6.0 * config.common_noise_std);
        timestamps.push(ts);
        actuals.push(anticipated + common);
        for m in 0..config.n_models() {
            let z = if config.heavy_tail[m] {
                // Unit-variance Student-t.
                t3.sample(&mut rng) / 3f64.sqrt()
            } else {
                std_normal.sample(&mut rng)
            };
            forecasts.push(
                anticipated * (1.0 + config.model_bias[m]) + config.model_noise_std[m] * z,
            );
        }
    }
    let names = (1..=config.n_models()).map(|m| format!("model{m}")).collect();
    ForecastPanel::new(config.series_id.clone(), timestamps, actuals, forecasts, names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub series: String,
    pub method: String,
    pub report: ProbMetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefrRow {
    pub series: String,
    pub method: String,
    pub alpha: f64,
    pub refr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub series: String,
    pub method: String,
    pub axis: String,
    pub value: String,
    pub report: ProbMetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub series: String,
    pub method: String,
    pub hour: usize,
    pub timestamp: String,
    pub actual: f64,
    pub pqre: f64,
    pub pws: f64,
    pub train_size: usize,
    pub train_max_index: usize,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRow {
    pub method_a: String,
    pub method_b: String,
    pub wins: usize,
}

/// Everything a run writes to disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub metrics: Vec<MetricsRow>,
    pub refr: Vec<RefrRow>,
    pub sweeps: Vec<SweepRow>,
    pub dm: Vec<DmEntry>,
    pub wins: Vec<WinRow>,
    pub records: Vec<RecordRow>,
}

impl ReportBundle {
    pub fn add_evaluation(&mut self, result: &EvaluationResult) -> Result<()> {
        let method = result.config.label();
        let series = result.series_id.clone();
        self.metrics.push(MetricsRow {
            series: series.clone(),
            method: method.clone(),
            report: result.report,
        });
        let grid = result
            .records
            .first()
            .map(|r| r.forecast.grid().clone())
            .ok_or(Error::Empty("evaluation records"))?;
        for (alpha, refr) in grid.alphas().zip(result.refr_table()?) {
            self.refr.push(RefrRow {
                series: series.clone(),
                method: method.clone(),
                alpha,
                refr,
            });
        }
        for r in &result.records {
            self.records.push(RecordRow {
                series: series.clone(),
                method: method.clone(),
                hour: r.hour,
                timestamp: format_timestamp(&r.timestamp),
                actual: r.actual,
                pqre: r.pqre,
                pws: r.pws,
                train_size: r.train_size,
                train_max_index: r.train_max_index,
                quantiles: r.forecast.values().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add_sweep(&mut self, sweep: &SweepResult) {
        for p in &sweep.points {
            self.sweeps.push(SweepRow {
                series: sweep.series_id.clone(),
                method: sweep.method.to_string(),
                axis: sweep.axis.as_str().to_string(),
                value: p.label(),
                report: p.report,
            });
        }
    }

    pub fn set_comparison(&mut self, cmp: &Comparison) {
        self.dm = cmp.entries.clone();
        self.wins.clear();
        for (i, a) in cmp.methods.iter().enumerate() {
            for (j, b) in cmp.methods.iter().enumerate() {
                self.wins.push(WinRow {
                    method_a: a.clone(),
                    method_b: b.clone(),
                    wins: cmp.wins[i][j],
                });
            }
        }
    }

    /// Per-hour PQRE vectors grouped by (series, method), hours ascending.
    pub fn loss_series(&self) -> Vec<LossSeries> {
        let mut grouped: BTreeMap<(String, String), Vec<(usize, f64)>> = BTreeMap::new();
        for r in &self.records {
            grouped
                .entry((r.series.clone(), r.method.clone()))
                .or_default()
                .push((r.hour, r.pqre));
        }
        grouped
            .into_iter()
            .map(|((series_id, method), mut v)| {
                v.sort_by_key(|p| p.0);
                LossSeries {
                    series_id,
                    method,
                    hours: v.iter().map(|p| p.0).collect(),
                    pqre: v.iter().map(|p| p.1).collect(),
                }
            })
            .collect()
    }

    /// `{series -> method -> metric -> value}`.
    pub fn summary(&self) -> BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> {
        let mut out: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
        for row in &self.metrics {
            let metrics = ProbMetricsReport::FIELDS
                .iter()
                .map(|f| f.to_string())
                .zip(row.report.values())
                .collect();
            out.entry(row.series.clone())
                .or_default()
                .insert(row.method.clone(), metrics);
        }
        out
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const REFR_FILE: &str = "refr.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const DM_FILE: &str = "dm.csv";
pub const WINS_FILE: &str = "dm_wins.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn quantile_columns() -> Vec<String> {
    (1..=99).map(|h| format!("q{h:02}")).collect()
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn report_cells(r: &ProbMetricsReport) -> impl Iterator<Item = String> {
    r.values().into_iter().map(|v| v.to_string())
}

/// Writes only the Diebold-Mariano tables (`dm.csv`, `dm_wins.csv`).
pub fn write_dm_tables(bundle: &ReportBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let rows: Vec<Vec<String>> = bundle
        .dm
        .iter()
        .map(|d| {
            vec![
                d.series_id.clone(),
                d.method_a.clone(),
                d.method_b.clone(),
                d.result.statistic.to_string(),
                d.result.p_value.to_string(),
                d.result.n_obs.to_string(),
                d.a_wins.to_string(),
            ]
        })
        .collect();
    written.push(dir.join(DM_FILE));
    write_table(
        &dir.join(DM_FILE),
        &strings(&["series", "method_a", "method_b", "statistic", "p_value", "n_obs", "a_wins"]),
        &rows,
    )?;

    let rows: Vec<Vec<String>> = bundle
        .wins
        .iter()
        .map(|w| vec![w.method_a.clone(), w.method_b.clone(), w.wins.to_string()])
        .collect();
    written.push(dir.join(WINS_FILE));
    write_table(&dir.join(WINS_FILE), &strings(&["method_a", "method_b", "wins"]), &rows)?;
    Ok(written)
}

/// Writes every table of `bundle` into `dir`, creating it if needed.
/// Returns the written paths.
pub fn write_reports(bundle: &ReportBundle, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metric_names = strings(&ProbMetricsReport::FIELDS);
    let mut written = Vec::new();

    let mut header = strings(&["series", "method"]);
    header.extend(metric_names.iter().cloned());
    let rows: Vec<Vec<String>> = bundle
        .metrics
        .iter()
        .map(|m| {
            let mut row = vec![m.series.clone(), m.method.clone()];
            row.extend(report_cells(&m.report));
            row
        })
        .collect();
    written.push(dir.join(METRICS_FILE));
    write_table(&dir.join(METRICS_FILE), &header, &rows)?;

    let rows: Vec<Vec<String>> = bundle
        .refr
        .iter()
        .map(|r| vec![r.series.clone(), r.method.clone(), r.alpha.to_string(), r.refr.to_string()])
        .collect();
    written.push(dir.join(REFR_FILE));
    write_table(&dir.join(REFR_FILE), &strings(&["series", "method", "alpha", "refr"]), &rows)?;

    let mut header = strings(&["series", "method", "axis", "value"]);
    header.extend(metric_names.iter().cloned());
    let rows: Vec<Vec<String>> = bundle
        .sweeps
        .iter()
        .map(|s| {
            let mut row = vec![s.series.clone(), s.method.clone(), s.axis.clone(), s.value.clone()];
            row.extend(report_cells(&s.report));
            row
        })
        .collect();
    written.push(dir.join(SWEEP_FILE));
    write_table(&dir.join(SWEEP_FILE), &header, &rows)?;

    written.extend(write_dm_tables(bundle, dir)?);

    let mut header = strings(&[
        "series",
        "method",
        "hour",
        "timestamp",
        "actual",
        "pqre",
        "pws",
        "train_size",
        "train_max_index",
    ]);
    header.extend(quantile_columns());
    let rows: Vec<Vec<String>> = bundle
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.series.clone(),
                r.method.clone(),
                r.hour.to_string(),
                r.timestamp.clone(),
                r.actual.to_string(),
                r.pqre.to_string(),
                r.pws.to_string(),
                r.train_size.to_string(),
                r.train_max_index.to_string(),
            ];
            row.extend(r.quantiles.iter().map(f64::to_string));
            row
        })
        .collect();
    written.push(dir.join(RECORDS_FILE));
    write_table(&dir.join(RECORDS_FILE), &header, &rows)?;

    let path = dir.join(SUMMARY_FILE);
    let mut json = serde_json::to_string_pretty(&bundle.summary()).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

struct Table {
    path: PathBuf,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: PathBuf, expected_header: &[String]) -> Result<Self> {
        let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let header = reader.headers().map_err(|e| csv_error(&path, e))?.clone();
        if header.iter().ne(expected_header.iter().map(String::as_str)) {
            return Err(parse_error(&path, 1, "unexpected header"));
        }
        let rows = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_error(&path, e))?;
        Ok(Self { path, rows })
    }

    fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let cell = &self.rows[row][col];
        cell.parse()
            .map_err(|_| parse_error(&self.path, row + 2, format!("invalid value {cell:?}")))
    }

    fn text(&self, row: usize, col: usize) -> String {
        self.rows[row][col].to_string()
    }

    fn report(&self, row: usize, first: usize) -> Result<ProbMetricsReport> {
        let mut v = [0.0; 14];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = self.parse(row, first + k)?;
        }
        Ok(ProbMetricsReport::from_values(v))
    }
}

/// Reads only `records.csv` from a report directory.
pub fn read_records(dir: impl AsRef<Path>) -> Result<Vec<RecordRow>> {
    let dir = dir.as_ref();
    let mut records = Vec::new();
    let mut header = strings(&[
        "series",
        "method",
        "hour",
        "timestamp",
        "actual",
        "pqre",
        "pws",
        "train_size",
        "train_max_index",
    ]);
    header.extend(quantile_columns());
    let t = Table::read(dir.join(RECORDS_FILE), &header)?;
    for i in 0..t.rows.len() {
        records.push(RecordRow {
            series: t.text(i, 0),
            method: t.text(i, 1),
            hour: t.parse(i, 2)?,
            timestamp: t.text(i, 3),
            actual: t.parse(i, 4)?,
            pqre: t.parse(i, 5)?,
            pws: t.parse(i, 6)?,
            train_size: t.parse(i, 7)?,
            train_max_index: t.parse(i, 8)?,
            quantiles: (9..9 + 99).map(|c| t.parse(i, c)).collect::<Result<_>>()?,
        });
    }
    Ok(records)
}

/// Reads back the CSV tables written by [`write_reports`].
pub fn read_reports(dir: impl AsRef<Path>) -> Result<ReportBundle> {
    let dir = dir.as_ref();
    let metric_names = strings(&ProbMetricsReport::FIELDS);
    let mut bundle = ReportBundle::default();

    let mut header = strings(&["series", "method"]);
    header.extend(metric_names.iter().cloned());
    let t = Table::read(dir.join(METRICS_FILE), &header)?;
    for i in 0..t.rows.len() {
        bundle.metrics.push(MetricsRow {
            series: t.text(i, 0),
            method: t.text(i, 1),
            report: t.report(i, 2)?,
        });
    }

    let t = Table::read(dir.join(REFR_FILE), &strings(&["series", "method", "alpha", "refr"]))?;
    for i in 0..t.rows.len() {
        bundle.refr.push(RefrRow {
            series: t.text(i, 0),
            method: t.text(i, 1),
            alpha: t.parse(i, 2)?,
            refr: t.parse(i, 3)?,
        });
    }

    let mut header = strings(&["series", "method", "axis", "value"]);
    header.extend(metric_names.iter().cloned());
    let t = Table::read(dir.join(SWEEP_FILE), &header)?;
    for i in 0..t.rows.len() {
        bundle.sweeps.push(SweepRow {
            series: t.text(i, 0),
            method: t.text(i, 1),
            axis: t.text(i, 2),
            value: t.text(i, 3),
            report: t.report(i, 4)?,
        });
    }

    let t = Table::read(
        dir.join(DM_FILE),
        &strings(&["series", "method_a", "method_b", "statistic", "p_value", "n_obs", "a_wins"]),
    )?;
    for i in 0..t.rows.len() {
        bundle.dm.push(DmEntry {
            series_id: t.text(i, 0),
            method_a: t.text(i, 1),
            method_b: t.text(i, 2),
            result: DMResult {
                statistic: t.parse(i, 3)?,
                p_value: t.parse(i, 4)?,
                n_obs: t.parse(i, 5)?,
            },
            a_wins: t.parse(i, 6)?,
        });
    }

    let t = Table::read(dir.join(WINS_FILE), &strings(&["method_a", "method_b", "wins"]))?;
    for i in 0..t.rows.len() {
        bundle.wins.push(WinRow {
            method_a: t.text(i, 0),
            method_b: t.text(i, 1),
            wins: t.parse(i, 2)?,
        });
    }

    bundle.records = read_records(dir)?;
    Ok(bundle)
}
