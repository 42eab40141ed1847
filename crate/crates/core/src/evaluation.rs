//! Rolling backtest: every test hour refits the meta-learner on the
//! patterns available before it and scores the resulting quantiles.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Datelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    knn_select, make_training_window, ForecastPanel, Method, MethodConfig, Mode,
    QuantileForecast, QuantileGrid, TrainingSet,
};
use crate::error::{Error, Result};
use crate::forest::fit_forest;
use crate::metrics::{self, dm_test, DMResult, ProbMetricsReport};
use crate::qlr::qlr_quantiles;
use crate::qrf::qrf_quantiles;
use crate::qrs::QrsModel;
use crate::seed;

/// Neighbourhood sizes of the default local-mode sweep.
pub const DEFAULT_K_GRID: [usize; 12] = [20, 40, 60, 80, 100, 120, 140, 160, 180, 200, 250, 300];
/// Minimum leaf sizes of the default QRF sweep.
pub const DEFAULT_Q_GRID: [usize; 9] = [1, 5, 10, 15, 20, 30, 40, 50, 60];
pub const DEFAULT_TEST_HOURS: usize = 100;

/// Called with every training set right before a model is fitted on it.
pub trait FitObserver: Sync {
    fn observe(&self, series_id: &str, hour: usize, horizon: usize, train: &TrainingSet);
}

pub struct NoObserver;

impl FitObserver for NoObserver {
    fn observe(&self, _: &str, _: usize, _: usize, _: &TrainingSet) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub hour: usize,
    pub timestamp: DateTime<Utc>,
    pub actual: f64,
    pub forecast: QuantileForecast,
    pub pqre: f64,
    pub pws: f64,
    pub train_size: usize,
    pub train_max_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeStats {
    pub wall_seconds: f64,
    pub fits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub series_id: String,
    pub config: MethodConfig,
    pub records: Vec<HourRecord>,
    pub report: ProbMetricsReport,
    pub runtime: RuntimeStats,
}

impl EvaluationResult {
    pub fn hours(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.hour).collect()
    }

    pub fn pqre_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pqre).collect()
    }

    /// Rebuilds the report from the stored per-hour records.
    pub fn recompute_report(&self) -> Result<ProbMetricsReport> {
        report_from_records(&self.records)
    }

    pub fn refr_table(&self) -> Result<Vec<f64>> {
        let (actuals, qfs) = split_records(&self.records);
        metrics::refr_table(&actuals, &qfs)
    }
}

fn split_records(records: &[HourRecord]) -> (Vec<f64>, Vec<QuantileForecast>) {
    let actuals = records.iter().map(|r| r.actual).collect();
    let qfs = records.iter().map(|r| r.forecast.clone()).collect();
    (actuals, qfs)
}

pub fn report_from_records(records: &[HourRecord]) -> Result<ProbMetricsReport> {
    let (actuals, qfs) = split_records(records);
    let pq: Vec<f64> = records.iter().map(|r| r.pqre).collect();
    let pw: Vec<f64> = records.iter().map(|r| r.pws).collect();
    metrics::prob_metrics_from_losses(&actuals, &qfs, &pq, &pw)
}

/// Index of the first hour of the panel's final calendar year.
pub fn final_year_start(panel: &ForecastPanel) -> usize {
    let ts = panel.timestamps();
    let year = ts[ts.len() - 1].year();
    ts.partition_point(|t| t.year() < year)
}

/// `H` evenly spaced hours over the second half of the final year.
pub fn select_test_hours(panel: &ForecastPanel, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::invalid("test-hour count must be at least 1"));
    }
    if panel.len() < 2 * count {
        return Err(Error::invalid(format!(
            "panel of {} hours is too short for {count} test hours",
            panel.len()
        )));
    }
    let y0 = final_year_start(panel);
    let end = panel.len() - 1;
    let start = y0 + (end - y0 + 1) / 2;
    if count == 1 {
        return Ok(vec![start]);
    }
    let span = (end - start) as f64;
    if span / ((count - 1) as f64) < 1.0 {
        return Err(Error::invalid(format!(
            "second half of the final year ({} hours) cannot hold {count} distinct test hours",
            end - start + 1
        )));
    }
    Ok((0..count)
        .map(|i| {
            let pos = start as f64 + i as f64 * span / (count - 1) as f64;
            (pos.floor() as usize).min(end)
        })
        .collect())
}

/// Training set for one test hour: the final-year window up to `t - h`,
/// reduced to the `k` nearest patterns in local mode.
pub fn training_set_for(
    panel: &ForecastPanel,
    config: &MethodConfig,
    hour: usize,
) -> Result<TrainingSet> {
    let start = final_year_start(panel);
    let window = make_training_window(panel, start, hour, config.horizon).map_err(|e| {
        Error::TestHour {
            hour,
            message: e.to_string(),
        }
    })?;
    match config.mode {
        Mode::Global => Ok(window),
        Mode::Local { k } => {
            knn_select(&window, panel.input(hour), k).map_err(|e| Error::TestHour {
                hour,
                message: e.to_string(),
            })
        }
    }
}

/// Fits the configured meta-learner on `train` and forecasts `query`.
pub fn forecast_quantiles(
    config: &MethodConfig,
    train: &TrainingSet,
    query: &[f64],
    task_seed: u64,
    grid: &Arc<QuantileGrid>,
) -> Result<QuantileForecast> {
    let mut params = config.forest.clone();
    params.seed = task_seed;
    match config.method {
        Method::Qrf => qrf_quantiles(&fit_forest(train, &params)?, query, grid),
        Method::Qrs => QrsModel::fit(train, &params)?.predict(query, grid),
        Method::Qlr => qlr_quantiles(train, query, grid, config.rearrange),
    }
}

pub fn task_seed(seed: u64, series_id: &str, hour: usize) -> u64 {
    seed::derive(seed, &[seed::hash_str(series_id), hour as u64])
}

pub fn evaluate_method(
    panel: &ForecastPanel,
    config: &MethodConfig,
    hours: &[usize],
) -> Result<EvaluationResult> {
    evaluate_method_observed(panel, config, hours, &NoObserver)
}

pub fn evaluate_method_observed(
    panel: &ForecastPanel,
    config: &MethodConfig,
    hours: &[usize],
    observer: &dyn FitObserver,
) -> Result<EvaluationResult> {
    config.validate(panel.n_models())?;
    if hours.is_empty() {
        return Err(Error::Empty("test hours"));
    }
    // Fail fast on the earliest hour, which has the fewest patterns.
    if let Some(&first) = hours.iter().min() {
        training_set_for(panel, config, first)?;
    }
    let grid = Arc::new(QuantileGrid::standard());
    let started = Instant::now();
    let mut records = hours
        .par_iter()
        .map(|&hour| {
            let train = training_set_for(panel, config, hour)?;
            observer.observe(panel.series_id(), hour, config.horizon, &train);
            let seed = task_seed(config.seed, panel.series_id(), hour);
            let forecast = forecast_quantiles(config, &train, panel.input(hour), seed, &grid)?;
            let actual = panel.actual(hour);
            Ok(HourRecord {
                hour,
                timestamp: panel.timestamps()[hour],
                actual,
                pqre: metrics::pqre(actual, &forecast)?,
                pws: metrics::pws(actual, &forecast)?,
                train_size: train.len(),
                train_max_index: train.time_indices().iter().copied().max().unwrap_or(0),
                forecast,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.hour);
    let report = report_from_records(&records)?;
    Ok(EvaluationResult {
        series_id: panel.series_id().to_string(),
        config: config.clone(),
        runtime: RuntimeStats {
            wall_seconds: started.elapsed().as_secs_f64(),
            fits: records.len(),
        },
        records,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Q,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Q => "q",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// `None` marks the global-mode point of a k sweep.
    pub value: Option<usize>,
    pub report: ProbMetricsReport,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        self.value.map_or_else(|| "global".to_string(), |v| v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub series_id: String,
    pub method: Method,
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// One local run per `k`, then a global run as the final point.
pub fn sweep_k(
    panel: &ForecastPanel,
    base: &MethodConfig,
    ks: &[usize],
    hours: &[usize],
) -> Result<SweepResult> {
    if ks.is_empty() {
        return Err(Error::Empty("k grid"));
    }
    let mut points = Vec::with_capacity(ks.len() + 1);
    for &k in ks {
        let config = base.clone().with_mode(Mode::Local { k });
        points.push(SweepPoint {
            value: Some(k),
            report: evaluate_method(panel, &config, hours)?.report,
        });
    }
    let global = base.clone().with_mode(Mode::Global);
    points.push(SweepPoint {
        value: None,
        report: evaluate_method(panel, &global, hours)?.report,
    });
    Ok(SweepResult {
        series_id: panel.series_id().to_string(),
        method: base.method,
        axis: SweepAxis::K,
        points,
    })
}

/// One run per minimum leaf size, keeping the base mode.
pub fn sweep_q(
    panel: &ForecastPanel,
    base: &MethodConfig,
    qs: &[usize],
    hours: &[usize],
) -> Result<SweepResult> {
    if qs.is_empty() {
        return Err(Error::Empty("q grid"));
    }
    let points = qs
        .iter()
        .map(|&q| {
            let config = base.clone().with_min_leaf(q);
            Ok(SweepPoint {
                value: Some(q),
                report: evaluate_method(panel, &config, hours)?.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        series_id: panel.series_id().to_string(),
        method: base.method,
        axis: SweepAxis::Q,
        points,
    })
}

/// Per-hour PQRE series of one method on one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub series_id: String,
    pub method: String,
    pub hours: Vec<usize>,
    pub pqre: Vec<f64>,
}

impl From<&EvaluationResult> for LossSeries {
    fn from(r: &EvaluationResult) -> Self {
        Self {
            series_id: r.series_id.clone(),
            method: r.config.label(),
            hours: r.hours(),
            pqre: r.pqre_values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmEntry {
    pub series_id: String,
    pub method_a: String,
    pub method_b: String,
    pub result: DMResult,
    /// `method_a` significantly more accurate than `method_b`.
    pub a_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<String>,
    pub entries: Vec<DmEntry>,
    /// `wins[i][j]`: series on which `methods[i]` beats `methods[j]`.
    pub wins: Vec<Vec<usize>>,
}

impl Comparison {
    pub fn wins_of(&self, a: &str, b: &str) -> Option<usize> {
        let i = self.methods.iter().position(|m| m == a)?;
        let j = self.methods.iter().position(|m| m == b)?;
        Some(self.wins[i][j])
    }
}

/// Pairwise DM tests on per-hour PQRE for every series and ordered method pair.
pub fn compare_methods(losses: &[LossSeries]) -> Result<Comparison> {
    let mut by_series: BTreeMap<&str, BTreeMap<&str, &LossSeries>> = BTreeMap::new();
    for l in losses {
        if by_series
            .entry(&l.series_id)
            .or_default()
            .insert(&l.method, l)
            .is_some()
        {
            return Err(Error::invalid(format!(
                "duplicate results for {} on {}",
                l.method, l.series_id
            )));
        }
    }
    let mut methods: Vec<String> = losses.iter().map(|l| l.method.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut wins = vec![vec![0usize; methods.len()]; methods.len()];
    let mut entries = Vec::new();
    for (series, per_method) in &by_series {
        let mut hours: Option<&[usize]> = None;
        for l in per_method.values() {
            match hours {
                None => hours = Some(&l.hours),
                Some(h) if h != l.hours.as_slice() => {
                    return Err(Error::invalid(format!(
                        "methods on series {series} were evaluated on different test hours"
                    )));
                }
                _ => {}
            }
        }
        for (i, a) in methods.iter().enumerate() {
            for (j, b) in methods.iter().enumerate() {
                let (Some(la), Some(lb)) = (per_method.get(a.as_str()), per_method.get(b.as_str()))
                else {
                    continue;
                };
                let result = dm_test(&la.pqre, &lb.pqre)?;
                let a_wins = result.first_wins();
                if a_wins {
                    wins[i][j] += 1;
                }
                entries.push(DmEntry {
                    series_id: series.to_string(),
                    method_a: a.clone(),
                    method_b: b.clone(),
                    result,
                    a_wins,
                });
            }
        }
    }
    Ok(Comparison {
        methods,
        entries,
        wins,
    })
}
