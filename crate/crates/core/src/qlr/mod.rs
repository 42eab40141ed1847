//! Linear quantile regression: one pinball-loss linear program per grid
//! probability.
//!
//! Inputs and targets are centred and scaled before solving, and columns that
//! are numerically dependent on earlier ones (including constant features)
//! are dropped with a zero coefficient. Predictions are the contract; for
//! degenerate designs any optimal vertex is returned.

mod solver;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{rearrange_quantiles, QuantileForecast, QuantileGrid, TrainingSet};
use crate::error::{Error, Result};
use solver::Design;

/// Pinball loss of predicting `q` when `y` is observed.
pub fn pinball(y: f64, q: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let r = y - q;
    if r >= 0.0 {
        r * alpha
    } else {
        r * (alpha - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub alpha: f64,
}

impl CoefficientVector {
    pub fn new(intercept: f64, slopes: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("probability {alpha} outside (0, 1)")));
        }
        if !intercept.is_finite() || slopes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        Ok(Self {
            intercept,
            slopes,
            alpha,
        })
    }
}

pub fn qlr_predict(coeffs: &CoefficientVector, query: &[f64]) -> f64 {
    assert_eq!(coeffs.slopes.len(), query.len(), "query dimension mismatch");
    coeffs.intercept
        + coeffs
            .slopes
            .iter()
            .zip(query)
            .map(|(a, x)| a * x)
            .sum::<f64>()
}

/// Total pinball loss of `coeffs` on `train`.
pub fn qlr_objective(train: &TrainingSet, coeffs: &CoefficientVector) -> f64 {
    (0..train.len())
        .map(|i| pinball(train.targets()[i], qlr_predict(coeffs, train.input(i)), coeffs.alpha))
        .sum()
}

/// Standardised, full-column-rank design with the mapping back to the
/// original coordinates.
struct Standardized {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    /// Active feature indices (column `k + 1` of `x` is feature `active[k]`).
    active: Vec<usize>,
    centers: Vec<f64>,
    scales: Vec<f64>,
    y_center: f64,
    y_scale: f64,
    n_features: usize,
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / n as f64).sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

impl Standardized {
    fn new(train: &TrainingSet) -> Result<Self> {
        let n = train.len();
        if n == 0 {
            return Err(Error::Empty("training set"));
        }
        let nf = train.n_features();
        let (y_center, y_scale) = mean_and_scale(train.targets().iter().copied(), n);
        let mut centers = Vec::with_capacity(nf);
        let mut scales = Vec::with_capacity(nf);
        for j in 0..nf {
            let (m, s) = mean_and_scale((0..n).map(|i| train.input(i)[j]), n);
            centers.push(m);
            scales.push(s);
        }
        let column = |j: usize, i: usize| -> f64 {
            if j == 0 {
                1.0
            } else {
                (train.input(i)[j - 1] - centers[j - 1]) / scales[j - 1]
            }
        };

        // Greedy column selection from the Cholesky pivots of X'X / N.
        let p_full = nf + 1;
        let mut gram = vec![0.0; p_full * p_full];
        for i in 0..n {
            for a in 0..p_full {
                let va = column(a, i);
                for b in a..p_full {
                    gram[a * p_full + b] += va * column(b, i);
                }
            }
        }
        let mut kept: Vec<usize> = Vec::new();
        let mut l: Vec<Vec<f64>> = Vec::new();
        for j in 0..p_full {
            let gjj = gram[j * p_full + j] / n as f64;
            if gjj <= 0.0 {
                continue;
            }
            let mut row = Vec::with_capacity(kept.len() + 1);
            for (k, &c) in kept.iter().enumerate() {
                let (a, b) = (c.min(j), c.max(j));
                let mut s = gram[a * p_full + b] / n as f64;
                for m in 0..k {
                    s -= row[m] * l[k][m];
                }
                row.push(s / l[k][k]);
            }
            let d = gjj - row.iter().map(|v| v * v).sum::<f64>();
            if d > 1e-10 * gjj {
                row.push(d.sqrt());
                kept.push(j);
                l.push(row);
            }
        }

        let p = kept.len();
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            for &j in &kept {
                x.push(column(j, i));
            }
        }
        let y = train
            .targets()
            .iter()
            .map(|v| (v - y_center) / y_scale)
            .collect();
        let active = kept.iter().filter(|&&j| j > 0).map(|j| j - 1).collect();
        Ok(Self {
            x,
            y,
            p,
            active,
            centers,
            scales,
            y_center,
            y_scale,
            n_features: nf,
        })
    }

    fn design(&self) -> Design<'_> {
        Design {
            x: &self.x,
            y: &self.y,
            p: self.p,
        }
    }

    /// Maps standardised coefficients back to the original scale.
    fn coefficients(&self, beta: &[f64], alpha: f64) -> Result<CoefficientVector> {
        // The intercept column is never dropped.
        let mut slopes = vec![0.0; self.n_features];
        let mut intercept = beta[0];
        for (k, &j) in self.active.iter().enumerate() {
            let b = beta[k + 1];
            slopes[j] = self.y_scale * b / self.scales[j];
            intercept -= b * self.centers[j] / self.scales[j];
        }
        CoefficientVector::new(self.y_center + self.y_scale * intercept, slopes, alpha)
    }
}

pub fn fit_qlr(train: &TrainingSet, alpha: f64) -> Result<CoefficientVector> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("probability {alpha} outside (0, 1)")));
    }
    let std = Standardized::new(train)?;
    let sol = solver::solve(std.design(), alpha)?;
    std.coefficients(&sol.beta, alpha)
}

/// Fits every grid probability, warm-starting each from its neighbour.
pub fn fit_qlr_path(train: &TrainingSet, grid: &QuantileGrid) -> Result<Vec<CoefficientVector>> {
    let std = Standardized::new(train)?;
    let design = std.design();
    let alphas: Vec<f64> = grid.alphas().collect();
    if alphas.is_empty() {
        return Ok(Vec::new());
    }
    let bands = solver::residual_bands(design);
    let start = (0..alphas.len())
        .min_by(|&a, &b| (alphas[a] - 0.5).abs().total_cmp(&(alphas[b] - 0.5).abs()))
        .unwrap_or(0);
    let mut betas: Vec<Option<Vec<f64>>> = vec![None; alphas.len()];
    betas[start] = Some(solver::solve(design, alphas[start])?.beta);
    for (from, to) in (start..alphas.len() - 1)
        .map(|i| (i, i + 1))
        .chain((1..=start).rev().map(|i| (i, i - 1)))
    {
        let warm = betas[from].as_deref().expect("neighbour solved first");
        betas[to] = Some(solver::solve_warm(design, alphas[to], warm, &bands)?.beta);
    }
    betas
        .into_iter()
        .zip(&alphas)
        .map(|(b, &a)| std.coefficients(&b.expect("all solved"), a))
        .collect()
}

/// Per-probability fits for one training set.
#[derive(Debug, Clone)]
pub struct QlrModel {
    grid: Arc<QuantileGrid>,
    coefficients: Vec<CoefficientVector>,
}

impl QlrModel {
    pub fn fit(train: &TrainingSet, grid: &Arc<QuantileGrid>) -> Result<Self> {
        Ok(Self {
            grid: Arc::clone(grid),
            coefficients: fit_qlr_path(train, grid)?,
        })
    }

    pub fn coefficients(&self) -> &[CoefficientVector] {
        &self.coefficients
    }

    pub fn predict(&self, query: &[f64], rearrange: bool) -> Result<QuantileForecast> {
        if let Some(c) = self.coefficients.first() {
            if c.slopes.len() != query.len() {
                return Err(Error::Shape {
                    what: "query",
                    expected: c.slopes.len(),
                    got: query.len(),
                });
            }
        }
        let values = self
            .coefficients
            .iter()
            .map(|c| qlr_predict(c, query))
            .collect();
        let qf = QuantileForecast::new(Arc::clone(&self.grid), values)?;
        if rearrange {
            rearrange_quantiles(&qf)
        } else {
            Ok(qf)
        }
    }
}

pub fn qlr_quantiles(
    train: &TrainingSet,
    query: &[f64],
    grid: &Arc<QuantileGrid>,
    rearrange: bool,
) -> Result<QuantileForecast> {
    QlrModel::fit(train, grid)?.predict(query, rearrange)
}
