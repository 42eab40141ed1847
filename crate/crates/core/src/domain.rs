//! Domain types shared by every meta-learner: the forecast panel, training
//! sets, the probability grid and quantile vectors.
//!
//! All time indices in this crate are 0-based positions into the panel.

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestParams;

/// Actual loads and the point forecasts of `n` base models, one row per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    series_id: String,
    timestamps: Vec<DateTime<Utc>>,
    actuals: Vec<f64>,
    /// Row-major `T x n`.
    forecasts: Vec<f64>,
    model_names: Vec<String>,
}

impl ForecastPanel {
    pub fn new(
        series_id: impl Into<String>,
        timestamps: Vec<DateTime<Utc>>,
        actuals: Vec<f64>,
        forecasts: Vec<f64>,
        model_names: Vec<String>,
    ) -> Result<Self> {
        let t = timestamps.len();
        let n = model_names.len();
        if t == 0 {
            return Err(Error::Empty("panel has no rows"));
        }
        if n == 0 {
            return Err(Error::Empty("panel has no base models"));
        }
        if actuals.len() != t {
            return Err(Error::Shape {
                what: "panel actuals",
                expected: t,
                got: actuals.len(),
            });
        }
        if forecasts.len() != t * n {
            return Err(Error::Shape {
                what: "panel forecast cells",
                expected: t * n,
                got: forecasts.len(),
            });
        }
        for w in timestamps.windows(2) {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(Error::invalid(format!(
                    "timestamps must advance by exactly one hour ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&bad) = actuals.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::PercentageUndefined { value: bad });
        }
        if forecasts.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("panel forecasts"));
        }
        Ok(Self {
            series_id: series_id.into(),
            timestamps,
            actuals,
            forecasts,
            model_names,
        })
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }

    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn actuals(&self) -> &[f64] {
        &self.actuals
    }

    pub fn actual(&self, t: usize) -> f64 {
        self.actuals[t]
    }

    /// Base forecasts for hour `t`.
    pub fn input(&self, t: usize) -> &[f64] {
        let n = self.n_models();
        &self.forecasts[t * n..(t + 1) * n]
    }

    /// Forecasts of model `m` over the whole panel.
    pub fn model_column(&self, m: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.input(t)[m]).collect()
    }
}

/// Base forecasts for a single hour.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector(Vec<f64>);

impl InputVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input vector"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for InputVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Pairs of (base forecasts, actual load), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    n_features: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    time_indices: Vec<usize>,
}

impl TrainingSet {
    pub fn new(
        n_features: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        time_indices: Vec<usize>,
    ) -> Result<Self> {
        if inputs.len() != targets.len() * n_features {
            return Err(Error::Shape {
                what: "training inputs",
                expected: targets.len() * n_features,
                got: inputs.len(),
            });
        }
        if time_indices.len() != targets.len() {
            return Err(Error::Shape {
                what: "training time indices",
                expected: targets.len(),
                got: time_indices.len(),
            });
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training set"));
        }
        Ok(Self {
            n_features,
            inputs,
            targets,
            time_indices,
        })
    }

    /// Builds a set from row slices with synthetic time indices `0..len`.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Shape {
                what: "training row",
                expected: n,
                got: bad.len(),
            });
        }
        Self::new(
            n,
            rows.concat(),
            targets.to_vec(),
            (0..targets.len()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn time_indices(&self) -> &[usize] {
        &self.time_indices
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(rows.len() * self.n_features);
        for &i in rows {
            inputs.extend_from_slice(self.input(i));
        }
        Self {
            n_features: self.n_features,
            inputs,
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            time_indices: rows.iter().map(|&i| self.time_indices[i]).collect(),
        }
    }

    /// Returns a copy of the set with every target and every input multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n_features: self.n_features,
            inputs: self.inputs.iter().map(|v| v * c).collect(),
            targets: self.targets.iter().map(|v| v * c).collect(),
            time_indices: self.time_indices.clone(),
        }
    }
}

/// Ordered probability levels stored as integer hundredths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantileGrid {
    hundredths: Vec<u8>,
}

impl QuantileGrid {
    /// The 99-level grid 0.01, 0.02, ..., 0.99.
    pub fn standard() -> Self {
        Self {
            hundredths: (1..=99).collect(),
        }
    }

    pub fn from_hundredths(hundredths: Vec<u8>) -> Result<Self> {
        if hundredths.is_empty() {
            return Err(Error::Empty("quantile grid"));
        }
        if hundredths.iter().any(|&h| h == 0 || h >= 100) {
            return Err(Error::invalid("grid probabilities must lie in (0, 1)"));
        }
        if hundredths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid probabilities must be strictly increasing"));
        }
        Ok(Self { hundredths })
    }

    pub fn len(&self) -> usize {
        self.hundredths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hundredths.is_empty()
    }

    pub fn hundredths(&self) -> &[u8] {
        &self.hundredths
    }

    pub fn alpha(&self, i: usize) -> f64 {
        f64::from(self.hundredths[i]) / 100.0
    }

    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.hundredths.iter().map(|&h| f64::from(h) / 100.0)
    }

    pub fn position(&self, hundredths: u8) -> Option<usize> {
        self.hundredths.binary_search(&hundredths).ok()
    }

    /// Position of a real probability, if it names a grid level exactly.
    pub fn position_of(&self, alpha: f64) -> Option<usize> {
        let h = (alpha * 100.0).round();
        if !(1.0..=99.0).contains(&h) || (h / 100.0 - alpha).abs() > 1e-12 {
            return None;
        }
        self.position(h as u8)
    }
}

pub fn build_quantile_grid() -> QuantileGrid {
    QuantileGrid::standard()
}

/// Predicted quantiles aligned to a [`QuantileGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    grid: Arc<QuantileGrid>,
    values: Vec<f64>,
}

impl QuantileForecast {
    pub fn new(grid: Arc<QuantileGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                what: "quantile forecast",
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quantile forecast"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> &Arc<QuantileGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, alpha: f64) -> Result<f64> {
        self.grid
            .position_of(alpha)
            .map(|i| self.values[i])
            .ok_or(Error::NotOnGrid(alpha))
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Sorts quantile values ascending, repairing crossings from independent fits.
pub fn rearrange_quantiles(qf: &QuantileForecast) -> Result<QuantileForecast> {
    if qf.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantile forecast"));
    }
    let mut values = qf.values.clone();
    values.sort_by(f64::total_cmp);
    Ok(QuantileForecast {
        grid: Arc::clone(&qf.grid),
        values,
    })
}

/// All patterns with indices `0..=t - horizon`.
pub fn make_training_set(panel: &ForecastPanel, t: usize, horizon: usize) -> Result<TrainingSet> {
    make_training_window(panel, 0, t, horizon)
}

/// Patterns with indices `start..=t - horizon`.
pub fn make_training_window(
    panel: &ForecastPanel,
    start: usize,
    t: usize,
    horizon: usize,
) -> Result<TrainingSet> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if t >= panel.len() {
        return Err(Error::invalid(format!(
            "query index {t} outside panel of length {}",
            panel.len()
        )));
    }
    if t < horizon || t - horizon < start {
        return Err(Error::InsufficientHistory { t, horizon });
    }
    let end = t - horizon;
    let n = panel.n_models();
    let inputs = panel.forecasts[start * n..(end + 1) * n].to_vec();
    Ok(TrainingSet {
        n_features: n,
        inputs,
        targets: panel.actuals[start..=end].to_vec(),
        time_indices: (start..=end).collect(),
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` patterns nearest to `query` in Euclidean distance.
///
/// Ties go to the earlier time index; the result is in time order.
pub fn knn_select(train: &TrainingSet, query: &[f64], k: usize) -> Result<TrainingSet> {
    if query.len() != train.n_features {
        return Err(Error::Shape {
            what: "knn query",
            expected: train.n_features,
            got: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > train.len() {
        return Err(Error::KExceedsPatterns {
            k,
            available: train.len(),
        });
    }
    let mut ranked: Vec<(f64, usize, usize)> = (0..train.len())
        .map(|i| {
            (
                squared_distance(train.input(i), query),
                train.time_indices[i],
                i,
            )
        })
        .collect();
    let by_distance =
        |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, by_distance);
        ranked.truncate(k);
    }
    ranked.sort_by_key(|&(_, time, _)| time);
    let rows: Vec<usize> = ranked.into_iter().map(|(_, _, i)| i).collect();
    Ok(train.subset(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qrs,
    Qlr,
    Qrf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Qrs, Method::Qlr, Method::Qrf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Qrs => "qrs",
            Method::Qlr => "qlr",
            Method::Qrf => "qrf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qrs" => Ok(Method::Qrs),
            "qlr" => Ok(Method::Qlr),
            "qrf" => Ok(Method::Qrf),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Local { k: usize },
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Global => f.write_str("global"),
            Mode::Local { k } => write!(f, "local(k={k})"),
        }
    }
}

/// Meta-learner choice plus everything needed to retrain it at a test hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub mode: Mode,
    pub forest: ForestParams,
    pub horizon: usize,
    pub seed: u64,
    /// Sort QLR quantiles to remove crossings.
    pub rearrange: bool,
}

impl MethodConfig {
    /// Defaults used in the backtests: QRS forests grow to purity (q = 1),
    /// QRF uses q = 10, 100 trees, r = floor(n / 3).
    pub fn new(method: Method, mode: Mode) -> Self {
        let min_leaf = match method {
            Method::Qrf => 10,
            _ => 1,
        };
        Self {
            method,
            mode,
            forest: ForestParams {
                trees: 100,
                min_leaf,
                features_per_split: None,
                seed: 0,
                bootstrap: true,
            },
            horizon: 1,
            seed: 0,
            rearrange: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_min_leaf(mut self, q: usize) -> Self {
        self.forest.min_leaf = q;
        self
    }

    pub fn with_trees(mut self, p: usize) -> Self {
        self.forest.trees = p;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_horizon(mut self, h: usize) -> Self {
        self.horizon = h;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if let Mode::Local { k } = self.mode {
            if k == 0 {
                return Err(Error::invalid("k must be at least 1 in local mode"));
            }
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        self.forest.validate(n_features)
    }

    /// Short label such as `qrf[global,q=10]` used in reports.
    pub fn label(&self) -> String {
        let mode = match self.mode {
            Mode::Global => "global".to_string(),
            Mode::Local { k } => format!("k={k}"),
        };
        match self.method {
            Method::Qlr => format!("qlr[{mode}]"),
            m => format!("{m}[{mode},q={}]", self.forest.min_leaf),
        }
    }
}
