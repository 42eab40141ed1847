//! Quantiles through residual simulation: an RF point forecast plus a
//! Gaussian kernel density fitted to the point forecast shifted by every
//! in-sample training residual.

use std::sync::Arc;

use crate::domain::{QuantileForecast, QuantileGrid, TrainingSet};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Centers farther than this many bandwidths contribute exactly 0 or 1.
const KERNEL_REACH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    residuals: Vec<f64>,
}

impl ResidualSet {
    pub fn new(residuals: Vec<f64>) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Empty("residual set"));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("residuals"));
        }
        Ok(Self { residuals })
    }

    pub fn values(&self) -> &[f64] {
        &self.residuals
    }
}

/// `e_tau = y_tau - f(x_tau)` for every pattern the forest was trained on.
pub fn compute_residuals(forest: &Forest, train: &TrainingSet) -> Result<ResidualSet> {
    if forest.targets() != train.targets() {
        return Err(Error::invalid("forest was not trained on this training set"));
    }
    let residuals = train
        .targets()
        .iter()
        .zip(forest.training_means())
        .map(|(y, m)| y - m)
        .collect();
    ResidualSet::new(residuals)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian-kernel density over sorted centers.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    centers: Vec<f64>,
    bandwidth: f64,
    degenerate: bool,
}

impl KernelDensity {
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// All centers coincide; the density is a point mass.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Explicit construction, mostly for tests.
    pub fn with_bandwidth(mut centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Empty("kernel centers"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        centers.sort_by(f64::total_cmp);
        Ok(Self {
            centers,
            bandwidth,
            degenerate: false,
        })
    }

    fn window(&self, z: f64) -> (usize, usize) {
        let reach = KERNEL_REACH * self.bandwidth;
        let lo = self.centers.partition_point(|&c| c < z - reach);
        let hi = self.centers.partition_point(|&c| c <= z + reach);
        (lo, hi)
    }

    /// Returns `(CDF(z), density(z))`.
    fn evaluate(&self, z: f64) -> (f64, f64) {
        let (lo, hi) = self.window(z);
        let h = self.bandwidth;
        let mut cdf = 0.0;
        let mut pdf = 0.0;
        for &c in &self.centers[lo..hi] {
            let u = (z - c) / h;
            cdf += normal_cdf(u);
            pdf += normal_pdf(u);
        }
        let n = self.centers.len() as f64;
        ((cdf + lo as f64) / n, pdf / (n * h))
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if self.degenerate {
            return if z >= self.centers[0] { 1.0 } else { 0.0 };
        }
        self.evaluate(z).0
    }
}

/// Normal-reference bandwidth `1.06 * sigma * N^(-1/5)` with the robust
/// spread `sigma = min(sd, IQR / 1.349)`.
pub fn kde_fit(samples: &[f64]) -> Result<KernelDensity> {
    if samples.is_empty() {
        return Err(Error::Empty("kde samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kde samples"));
    }
    let mut centers = samples.to_vec();
    centers.sort_by(f64::total_cmp);
    let n = centers.len();
    let sd = if n > 1 {
        let mean = centers.iter().sum::<f64>() / n as f64;
        let ss: f64 = centers.iter().map(|c| (c - mean) * (c - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    if sd == 0.0 || centers[0] == centers[n - 1] {
        return Ok(KernelDensity {
            centers,
            bandwidth: 0.0,
            degenerate: true,
        });
    }
    let iqr = sorted_quantile(&centers, 0.75) - sorted_quantile(&centers, 0.25);
    // A zero IQR with non-zero spread (heavy ties) falls back to the sd.
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    let bandwidth = 1.06 * spread * (n as f64).powf(-0.2);
    Ok(KernelDensity {
        centers,
        bandwidth,
        degenerate: false,
    })
}

/// Inverse CDF of the kernel mixture.
///
/// Bracketed on `[min - 10h, max + 10h]`; Newton steps from the empirical
/// quantile, falling back to bisection whenever a step leaves the bracket.
pub fn kde_icdf(kde: &KernelDensity, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("probability {alpha} outside (0, 1)")));
    }
    let c = &kde.centers;
    if kde.degenerate {
        return Ok(c[0]);
    }
    let h = kde.bandwidth;
    let (min, max) = (c[0], c[c.len() - 1]);
    let tol = 1e-10 * (max - min + h);
    let mut lo = min - KERNEL_REACH * h;
    let mut hi = max + KERNEL_REACH * h;
    let mut z = sorted_quantile(c, alpha).clamp(lo, hi);
    for _ in 0..200 {
        let (f, dens) = kde.evaluate(z);
        let gap = f - alpha;
        if gap.abs() <= 1e-13 {
            return Ok(z);
        }
        if gap < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        if hi - lo <= tol {
            break;
        }
        let newton = z - gap / dens;
        z = if dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(z)
}

pub fn qrs_quantiles(
    point: f64,
    residuals: &ResidualSet,
    grid: &Arc<QuantileGrid>,
) -> Result<QuantileForecast> {
    if !point.is_finite() {
        return Err(Error::NonFinite("point forecast"));
    }
    let shifted: Vec<f64> = residuals.values().iter().map(|e| point + e).collect();
    let kde = kde_fit(&shifted)?;
    let mut values = grid
        .alphas()
        .map(|a| kde_icdf(&kde, a))
        .collect::<Result<Vec<_>>>()?;
    // Bracket tolerance can leave neighbours out of order by ~1e-10 MW.
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    QuantileForecast::new(Arc::clone(grid), values)
}

/// Fitted QRS meta-model: the RF point model and its training residuals.
#[derive(Debug, Clone)]
pub struct QrsModel {
    forest: Forest,
    residuals: ResidualSet,
}

impl QrsModel {
    pub fn fit(train: &TrainingSet, params: &ForestParams) -> Result<Self> {
        let forest = fit_forest(train, params)?;
        let residuals = compute_residuals(&forest, train)?;
        Ok(Self { forest, residuals })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn residuals(&self) -> &ResidualSet {
        &self.residuals
    }

    pub fn predict(&self, query: &[f64], grid: &Arc<QuantileGrid>) -> Result<QuantileForecast> {
        let point = self.forest.mean(query)?;
        qrs_quantiles(point, &self.residuals, grid)
    }
}
