//! Quantile regression forest: the forest weights define a weighted empirical
//! conditional CDF over the training targets, inverted with the `inf` rule.

use std::sync::Arc;

use crate::domain::{QuantileForecast, QuantileGrid};
use crate::error::Result;
use crate::forest::Forest;

/// Slack on `F(y) >= alpha` absorbing rounding in the accumulated weights.
pub const INVERSION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    support: Vec<f64>,
    cum_weights: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_weights(&self) -> &[f64] {
        &self.cum_weights
    }

    /// Smallest support point with `F(y) >= alpha - INVERSION_TOLERANCE`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let i = self
            .cum_weights
            .partition_point(|&c| c < alpha - INVERSION_TOLERANCE);
        self.support[i.min(self.support.len() - 1)]
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn qrf_cdf(forest: &Forest, query: &[f64]) -> Result<EmpiricalCdf> {
    let weights = forest.weights(query)?.into_inner();
    let targets = forest.targets();
    let mut support: Vec<f64> = Vec::new();
    let mut cum_weights: Vec<f64> = Vec::new();
    let mut acc = CompensatedSum::default();
    for &i in forest.target_order() {
        let w = weights[i as usize];
        let y = targets[i as usize];
        acc.add(w);
        if support.last() == Some(&y) {
            *cum_weights.last_mut().unwrap() = acc.value();
        } else {
            support.push(y);
            cum_weights.push(acc.value());
        }
    }
    Ok(EmpiricalCdf {
        support,
        cum_weights,
    })
}

pub fn qrf_quantiles(
    forest: &Forest,
    query: &[f64],
    grid: &Arc<QuantileGrid>,
) -> Result<QuantileForecast> {
    let cdf = qrf_cdf(forest, query)?;
    let values = grid.alphas().map(|a| cdf.quantile(a)).collect();
    QuantileForecast::new(Arc::clone(grid), values)
}
