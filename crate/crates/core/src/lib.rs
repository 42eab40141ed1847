//! Stacking meta-learners that turn the point forecasts of several base
//! models into 99-level quantile forecasts.
//!
//! Three meta-learners share one backtest harness:
//!
//! * [`qrf`]: quantile regression forests,
//! * [`qrs`]: a random-forest point forecast plus a kernel density of its
//!   training residuals,
//! * [`qlr`]: linear quantile regression, one exact LP per probability.
//!
//! [`evaluation`] retrains a model at every test hour on the patterns that
//! precede it, and [`metrics`] scores the resulting quantile vectors.

pub mod cli;
pub mod dataio;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod metrics;
pub mod qlr;
pub mod qrf;
pub mod qrs;
pub mod seed;

pub use domain::{
    build_quantile_grid, knn_select, make_training_set, make_training_window,
    rearrange_quantiles, ForecastPanel, InputVector, Method, MethodConfig, Mode,
    QuantileForecast, QuantileGrid, TrainingSet,
};
pub use error::{Error, Result};
pub use forest::{fit_forest, Forest, ForestParams};
