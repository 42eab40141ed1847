//! Closed-form metric fixtures and the joint rescaling property.

use std::sync::Arc;

use probstack::metrics::*;
use probstack::qlr::pinball;
use probstack::{QuantileForecast, QuantileGrid};
use rand::Rng;

fn exact(a: f64, b: f64) -> bool {
    a == b
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn grid() -> Arc<QuantileGrid> {
    Arc::new(QuantileGrid::standard())
}

fn flat(value: f64) -> QuantileForecast {
    QuantileForecast::new(grid(), vec![value; 99]).unwrap()
}

/// Forecast with q05 = lower, q95 = upper and a linear ramp elsewhere.
fn interval(lower: f64, upper: f64) -> QuantileForecast {
    let values = (1..=99)
        .map(|h| lower + (upper - lower) * (f64::from(h) - 5.0) / 90.0)
        .collect();
    QuantileForecast::new(grid(), values).unwrap()
}

/// Named pass/fail results for every closed-form example.
pub fn closed_form_checks() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, ok: bool| out.push((name, ok));

    check("pinball above", exact(pinball(10.0, 8.0, 0.25), 0.5));
    check("pinball below", exact(pinball(8.0, 10.0, 0.25), 1.5));
    check("pinball at zero residual", exact(pinball(3.0, 3.0, 0.7), 0.0));

    check("pqre perfect", exact(pqre(100.0, &flat(100.0)).unwrap(), 0.0));
    let median_only = Arc::new(QuantileGrid::from_hundredths(vec![50]).unwrap());
    let qf = QuantileForecast::new(median_only, vec![90.0]).unwrap();
    check("pqre single level", exact(pqre(100.0, &qf).unwrap(), 5.0));
    let three = Arc::new(QuantileGrid::from_hundredths(vec![10, 50, 90]).unwrap());
    let qf = QuantileForecast::new(three, vec![90.0, 100.0, 115.0]).unwrap();
    let by_hand = 100.0 * (0.1 * 10.0 + 0.0 + 0.1 * 15.0) / (3.0 * 100.0);
    check("pqre three levels", near(pqre(100.0, &qf).unwrap(), by_hand));

    let s = aggregate(&[1.0, 2.0, 3.0]).unwrap();
    check("aggregate odd", s.mean == 2.0 && s.median == 2.0 && s.std == 1.0);
    let s = aggregate(&[5.0]).unwrap();
    check("aggregate single", s.mean == 5.0 && s.median == 5.0 && s.std == 0.0);
    check("aggregate even median", aggregate(&[1.0, 2.0, 3.0, 4.0]).unwrap().median == 2.5);

    let actuals = [10.0, 20.0, 30.0, 40.0];
    let above: Vec<QuantileForecast> = (0..4).map(|_| flat(1e9)).collect();
    check("refr all above", exact(refr(&actuals, &above, 0.5).unwrap(), 1.0));
    let tied: Vec<QuantileForecast> = actuals.iter().map(|&y| flat(y)).collect();
    check("refr tie counts", exact(refr(&actuals, &tied, 0.5).unwrap(), 1.0));
    let mut one_exceeds = tied.clone();
    one_exceeds[2] = flat(29.0);
    check("refr one exceedance", exact(refr(&actuals, &one_exceeds, 0.5).unwrap(), 0.75));
    let table = arfe_table(&actuals, &above).unwrap();
    let marfe = aggregate(&table).unwrap().mean;
    check("marfe all above", near(marfe, 0.5));

    check("winkler inside", exact(winkler(5.0, 4.0, 6.0, 0.1).unwrap(), 2.0));
    check("winkler below", exact(winkler(3.0, 4.0, 6.0, 0.1).unwrap(), 22.0));
    check("winkler above", exact(winkler(7.0, 4.0, 6.0, 0.1).unwrap(), 22.0));
    check("winkler crossing rejected", winkler(5.0, 6.0, 4.0, 0.1).is_err());

    check("pws inside", near(pws(100.0, &interval(95.0, 105.0)).unwrap(), 10.0));
    let below = 100.0 * (10.0 + 20.0 * 5.0) / 90.0;
    check("pws below", near(pws(90.0, &interval(95.0, 105.0)).unwrap(), below));
    check("pws degenerate", exact(pws(100.0, &flat(100.0)).unwrap(), 0.0));

    let qfs: Vec<QuantileForecast> = (0..4).map(|_| interval(10.0, 20.0)).collect();
    let c = pi_coverage(&[15.0, 15.0, 12.0, 19.0], &qfs).unwrap();
    check("coverage all inside", c.inside == 100.0 && c.below == 0.0 && c.above == 0.0);
    let c = pi_coverage(&[5.0, 15.0, 25.0, 30.0], &qfs).unwrap();
    check("coverage mixed", c.inside == 25.0 && c.below == 25.0 && c.above == 50.0);
    let c = pi_coverage(&[10.0, 20.0], &qfs[..2]).unwrap();
    check("coverage boundaries inside", c.inside == 100.0);

    let p = point_metrics(&[100.0, 100.0], &[100.0, 100.0]).unwrap();
    check(
        "point perfect",
        [p.mape, p.mdape, p.mse, p.mpe, p.stdpe].iter().all(|&v| v == 0.0),
    );
    let p = point_metrics(&[100.0, 100.0], &[90.0, 110.0]).unwrap();
    check("point fixture", p.mape == 10.0 && p.mpe == 0.0 && p.mse == 100.0);
    let p = point_metrics(&[100.0, 200.0], &[110.0, 230.0]).unwrap();
    check("mpe sign for high forecasts", p.mpe < 0.0);

    let (qmape, qmdape) = median_point_metrics(&[100.0], &[flat(98.0)]).unwrap();
    check("median point metrics", near(qmape, 2.0) && near(qmdape, 2.0));

    let same = [1.0, 2.0, 3.0];
    let d = dm_test(&same, &same).unwrap();
    check("dm identical", d.statistic == 0.0 && d.p_value == 1.0 && !d.first_wins());
    let (a, b) = ([3.0, 1.0, 4.0, 1.0, 5.0], [2.0, 7.0, 1.0, 8.0, 2.0]);
    let ab = dm_test(&a, &b).unwrap();
    let ba = dm_test(&b, &a).unwrap();
    check("dm antisymmetry", ab.statistic == -ba.statistic && ab.p_value == ba.p_value);

    out
}

/// Random forecast set with mixed coverage, for rescaling.
pub fn random_forecasts(seed: u64, n: usize) -> (Vec<f64>, Vec<QuantileForecast>) {
    let mut r = super::rng(seed);
    let mut actuals = Vec::with_capacity(n);
    let mut qfs = Vec::with_capacity(n);
    for _ in 0..n {
        let y = r.random_range(500.0..1500.0);
        let centre = y + r.random_range(-80.0..80.0);
        let spread = r.random_range(5.0..60.0);
        let mut values: Vec<f64> = (1..=99)
            .map(|h| centre + spread * (f64::from(h) - 50.0) / 49.0 + r.random_range(-1.0..1.0))
            .collect();
        values.sort_by(f64::total_cmp);
        actuals.push(y);
        qfs.push(QuantileForecast::new(grid(), values).unwrap());
    }
    (actuals, qfs)
}

/// Largest relative deviation of any scale-free report field after
/// multiplying actuals and quantiles by `c`.
pub fn rescaling_deviation(actuals: &[f64], qfs: &[QuantileForecast], c: f64) -> f64 {
    let base = prob_metrics(actuals, qfs).unwrap().values();
    let scaled_actuals: Vec<f64> = actuals.iter().map(|y| y * c).collect();
    let scaled: Vec<QuantileForecast> = qfs
        .iter()
        .map(|q| QuantileForecast::new(grid(), q.values().iter().map(|v| v * c).collect()).unwrap())
        .collect();
    let other = prob_metrics(&scaled_actuals, &scaled).unwrap().values();
    base.iter()
        .zip(other)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max)
}
