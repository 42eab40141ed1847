//! Probabilistic and point forecast metrics, and the Diebold-Mariano test.

use serde::{Deserialize, Serialize};

use crate::domain::{QuantileForecast, QuantileGrid};
use crate::error::{Error, Result};
use crate::qlr::pinball;

/// Lower and upper probabilities of the 90% prediction interval.
pub const PI_LOWER: f64 = 0.05;
pub const PI_UPPER: f64 = 0.95;
/// Miss rate of the 90% interval.
pub const PI_MISS_RATE: f64 = 0.1;
/// One-sided 5% critical value of the standard normal.
pub const DM_CRITICAL: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbMetricsReport {
    pub mpqre: f64,
    pub mdpqre: f64,
    pub stdpqre: f64,
    pub marfe: f64,
    pub mdarfe: f64,
    pub stdarfe: f64,
    pub mpws: f64,
    pub mdpws: f64,
    pub stdpws: f64,
    pub in_pi: f64,
    pub below_pi: f64,
    pub above_pi: f64,
    pub qmape: f64,
    pub qmdape: f64,
}

impl ProbMetricsReport {
    pub const FIELDS: [&'static str; 14] = [
        "MPQRE", "MdPQRE", "StdPQRE", "MARFE", "MdARFE", "StdARFE", "MPWS", "MdPWS", "StdPWS",
        "inPI", "belowPI", "abovePI", "QMAPE", "QMdAPE",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.mpqre,
            self.mdpqre,
            self.stdpqre,
            self.marfe,
            self.mdarfe,
            self.stdarfe,
            self.mpws,
            self.mdpws,
            self.stdpws,
            self.in_pi,
            self.below_pi,
            self.above_pi,
            self.qmape,
            self.qmdape,
        ]
    }

    pub fn from_values(v: [f64; 14]) -> Self {
        Self {
            mpqre: v[0],
            mdpqre: v[1],
            stdpqre: v[2],
            marfe: v[3],
            mdarfe: v[4],
            stdarfe: v[5],
            mpws: v[6],
            mdpws: v[7],
            stdpws: v[8],
            in_pi: v[9],
            below_pi: v[10],
            above_pi: v[11],
            qmape: v[12],
            qmdape: v[13],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetricsReport {
    pub mape: f64,
    pub mdape: f64,
    pub mse: f64,
    pub mpe: f64,
    pub stdpe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DMResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_obs: usize,
}

impl DMResult {
    /// First method significantly more accurate (one-sided, 5%).
    pub fn first_wins(&self) -> bool {
        self.statistic < -DM_CRITICAL
    }
}

fn check_actual(actual: f64) -> Result<()> {
    if actual > 0.0 && actual.is_finite() {
        Ok(())
    } else {
        Err(Error::PercentageUndefined { value: actual })
    }
}

fn check_lengths(actuals: usize, forecasts: usize) -> Result<()> {
    if actuals != forecasts {
        return Err(Error::Shape {
            what: "forecasts vs actuals",
            expected: actuals,
            got: forecasts,
        });
    }
    if actuals == 0 {
        return Err(Error::Empty("forecast sample"));
    }
    Ok(())
}

/// Per-forecast percentage quantile regression error.
pub fn pqre(actual: f64, qf: &QuantileForecast) -> Result<f64> {
    check_actual(actual)?;
    let total: f64 = qf
        .grid()
        .alphas()
        .zip(qf.values())
        .map(|(a, &q)| pinball(actual, q, a))
        .sum();
    Ok(100.0 * total / (qf.values().len() as f64 * actual))
}

/// Mean, median and sample standard deviation (0 for a single value).
pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("values to aggregate"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary { mean, median, std })
}

/// Fraction of actuals at or below the predicted `alpha`-quantile.
pub fn refr(actuals: &[f64], qfs: &[QuantileForecast], alpha: f64) -> Result<f64> {
    check_lengths(actuals.len(), qfs.len())?;
    let mut hits = 0usize;
    for (&y, qf) in actuals.iter().zip(qfs) {
        if y <= qf.at(alpha)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / actuals.len() as f64)
}

/// ReFr for every probability of the forecasts' (shared) grid.
pub fn refr_table(actuals: &[f64], qfs: &[QuantileForecast]) -> Result<Vec<f64>> {
    check_lengths(actuals.len(), qfs.len())?;
    let grid: &QuantileGrid = qfs[0].grid();
    if qfs.iter().any(|q| q.grid() != grid) {
        return Err(Error::invalid("forecasts use different quantile grids"));
    }
    let mut hits = vec![0usize; grid.len()];
    for (&y, qf) in actuals.iter().zip(qfs) {
        for (h, &q) in hits.iter_mut().zip(qf.values()) {
            if y <= q {
                *h += 1;
            }
        }
    }
    let n = actuals.len() as f64;
    Ok(hits.into_iter().map(|h| h as f64 / n).collect())
}

/// `|ReFr(alpha) - alpha|` over the grid; MARFE is its mean.
pub fn arfe_table(actuals: &[f64], qfs: &[QuantileForecast]) -> Result<Vec<f64>> {
    let refr = refr_table(actuals, qfs)?;
    Ok(qfs[0]
        .grid()
        .alphas()
        .zip(refr)
        .map(|(a, r)| (r - a).abs())
        .collect())
}

/// Interval score: width plus a `2 / alpha`-scaled miss penalty.
pub fn winkler(actual: f64, lower: f64, upper: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::Crossing { lower, upper });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("interval miss rate {alpha} outside (0, 1)")));
    }
    let width = upper - lower;
    Ok(if actual < lower {
        width + 2.0 / alpha * (lower - actual)
    } else if actual > upper {
        width + 2.0 / alpha * (actual - upper)
    } else {
        width
    })
}

/// Percentage Winkler score of the 90% interval.
pub fn pws(actual: f64, qf: &QuantileForecast) -> Result<f64> {
    check_actual(actual)?;
    let w = winkler(actual, qf.at(PI_LOWER)?, qf.at(PI_UPPER)?, PI_MISS_RATE)?;
    Ok(100.0 * w / actual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub inside: f64,
    pub below: f64,
    pub above: f64,
}

/// Percentages of actuals inside (inclusive), below and above the 90% PI.
pub fn pi_coverage(actuals: &[f64], qfs: &[QuantileForecast]) -> Result<Coverage> {
    check_lengths(actuals.len(), qfs.len())?;
    let (mut below, mut above) = (0usize, 0usize);
    for (&y, qf) in actuals.iter().zip(qfs) {
        if y < qf.at(PI_LOWER)? {
            below += 1;
        } else if y > qf.at(PI_UPPER)? {
            above += 1;
        }
    }
    let n = actuals.len();
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(Coverage {
        inside: pct(n - below - above),
        below: pct(below),
        above: pct(above),
    })
}

pub fn point_metrics(actuals: &[f64], preds: &[f64]) -> Result<PointMetricsReport> {
    check_lengths(actuals.len(), preds.len())?;
    let mut ape = Vec::with_capacity(actuals.len());
    let mut pe = Vec::with_capacity(actuals.len());
    let mut se = 0.0;
    for (&y, &f) in actuals.iter().zip(preds) {
        check_actual(y)?;
        let e = 100.0 * (y - f) / y;
        pe.push(e);
        ape.push(e.abs());
        se += (y - f) * (y - f);
    }
    let a = aggregate(&ape)?;
    let s = aggregate(&pe)?;
    Ok(PointMetricsReport {
        mape: a.mean,
        mdape: a.median,
        mse: se / actuals.len() as f64,
        mpe: s.mean,
        stdpe: s.std,
    })
}

/// MAPE and MdAPE using the median quantile as point forecast.
pub fn median_point_metrics(actuals: &[f64], qfs: &[QuantileForecast]) -> Result<(f64, f64)> {
    check_lengths(actuals.len(), qfs.len())?;
    let medians = qfs.iter().map(|q| q.at(0.5)).collect::<Result<Vec<_>>>()?;
    let r = point_metrics(actuals, &medians)?;
    Ok((r.mape, r.mdape))
}

/// Full probabilistic report over a set of forecasts.
pub fn prob_metrics(actuals: &[f64], qfs: &[QuantileForecast]) -> Result<ProbMetricsReport> {
    check_lengths(actuals.len(), qfs.len())?;
    let pq = actuals
        .iter()
        .zip(qfs)
        .map(|(&y, q)| pqre(y, q))
        .collect::<Result<Vec<_>>>()?;
    let pw = actuals
        .iter()
        .zip(qfs)
        .map(|(&y, q)| pws(y, q))
        .collect::<Result<Vec<_>>>()?;
    prob_metrics_from_losses(actuals, qfs, &pq, &pw)
}

/// Report from precomputed per-forecast PQRE and PWS values.
pub fn prob_metrics_from_losses(
    actuals: &[f64],
    qfs: &[QuantileForecast],
    pqre_values: &[f64],
    pws_values: &[f64],
) -> Result<ProbMetricsReport> {
    let pq = aggregate(pqre_values)?;
    let pw = aggregate(pws_values)?;
    let ar = aggregate(&arfe_table(actuals, qfs)?)?;
    let cov = pi_coverage(actuals, qfs)?;
    let (qmape, qmdape) = median_point_metrics(actuals, qfs)?;
    Ok(ProbMetricsReport {
        mpqre: pq.mean,
        mdpqre: pq.median,
        stdpqre: pq.std,
        marfe: ar.mean,
        mdarfe: ar.median,
        stdarfe: ar.std,
        mpws: pw.mean,
        mdpws: pw.median,
        stdpws: pw.std,
        in_pi: cov.inside,
        below_pi: cov.below,
        above_pi: cov.above,
        qmape,
        qmdape,
    })
}

/// Diebold-Mariano statistic on `loss_a - loss_b` with a normal reference.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DMResult> {
    check_lengths(loss_a.len(), loss_b.len())?;
    let n = loss_a.len();
    if n < 2 {
        return Err(Error::invalid("Diebold-Mariano test needs at least two losses"));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(DMResult {
                statistic: 0.0,
                p_value: 1.0,
                n_obs: n,
            });
        }
        return Err(Error::DegenerateDifferential { mean });
    }
    let statistic = mean / (var / n as f64).sqrt();
    let p_value = libm::erfc(statistic.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(DMResult {
        statistic,
        p_value,
        n_obs: n,
    })
}
