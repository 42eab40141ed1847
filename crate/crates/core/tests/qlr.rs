mod common;

use std::sync::Arc;

use common::rng;
use probstack::qlr::{fit_qlr, fit_qlr_path, qlr_objective, qlr_predict, CoefficientVector, QlrModel};
use probstack::{QuantileGrid, TrainingSet};
use rand::Rng;
use rand_distr::{Distribution, StudentT};

fn fixture(seed: u64, n: usize, m: usize) -> TrainingSet {
    let mut r = rng(seed);
    let t = StudentT::new(3.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| r.random_range(-10.0..10.0)).collect())
        .collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|x| {
            let signal: f64 = x.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum();
            100.0 + signal + 3.0 * t.sample(&mut r)
        })
        .collect();
    TrainingSet::from_rows(&rows, &ys).unwrap()
}

/// Gaussian elimination with partial pivoting; None if singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn design_row(train: &TrainingSet, i: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    row.extend_from_slice(train.input(i));
    row
}

/// Checks the KKT conditions of the pinball LP: with Z the zero-residual
/// rows, there must be multipliers u in [alpha - 1, alpha] on Z balancing
/// the signed sum of the remaining design rows.
fn certify(train: &TrainingSet, c: &CoefficientVector) -> Result<(), String> {
    let alpha = c.alpha;
    let p = train.n_features() + 1;
    let scale = train.targets().iter().map(|y| y.abs()).fold(1.0, f64::max);
    let mut zero = Vec::new();
    let mut g = vec![0.0; p];
    for i in 0..train.len() {
        let r = train.targets()[i] - qlr_predict(c, train.input(i));
        if r.abs() <= 1e-8 * scale {
            zero.push(i);
        } else {
            let psi = if r > 0.0 { alpha } else { alpha - 1.0 };
            for (gk, xk) in g.iter_mut().zip(design_row(train, i)) {
                *gk += psi * xk;
            }
        }
    }
    if zero.len() != p {
        return Err(format!("{} zero residuals, expected {p}", zero.len()));
    }
    // Sum over Z of u_i x_i = -g.
    let a: Vec<Vec<f64>> = (0..p)
        .map(|k| zero.iter().map(|&i| design_row(train, i)[k]).collect())
        .collect();
    let u = solve(a, g.iter().map(|v| -v).collect()).ok_or("singular basis")?;
    let slack = 1e-7;
    if u.iter().all(|&v| v >= alpha - 1.0 - slack && v <= alpha + slack) {
        Ok(())
    } else {
        Err(format!("multipliers {u:?} outside [{}, {alpha}]", alpha - 1.0))
    }
}

#[test]
fn fits_carry_an_optimality_certificate() {
    for seed in 0..6 {
        let train = fixture(seed, 250, 3);
        for &alpha in &[0.01, 0.05, 0.3, 0.5, 0.81, 0.99] {
            let c = fit_qlr(&train, alpha).unwrap();
            certify(&train, &c).unwrap_or_else(|e| panic!("seed {seed} alpha {alpha}: {e}"));
        }
    }
}

#[test]
fn path_fits_carry_an_optimality_certificate() {
    let train = fixture(21, 3000, 4);
    let grid = QuantileGrid::standard();
    for c in fit_qlr_path(&train, &grid).unwrap() {
        certify(&train, &c).unwrap_or_else(|e| panic!("alpha {}: {e}", c.alpha));
    }
}

#[test]
fn no_small_perturbation_improves_the_objective() {
    let mut r = rng(77);
    let train = fixture(5, 200, 2);
    for &alpha in &[0.1, 0.5, 0.9] {
        let c = fit_qlr(&train, alpha).unwrap();
        let base = qlr_objective(&train, &c);
        for _ in 0..200 {
            let eps = 10f64.powf(r.random_range(-6.0..-1.0));
            let slopes: Vec<f64> = c.slopes.iter().map(|s| s + eps * r.random_range(-1.0..1.0)).collect();
            let probe = CoefficientVector::new(
                c.intercept + eps * r.random_range(-1.0..1.0),
                slopes,
                alpha,
            )
            .unwrap();
            assert!(qlr_objective(&train, &probe) >= base - 1e-9 * base);
        }
    }
}

#[test]
fn affine_equivariance() {
    let train = fixture(8, 300, 2);
    let (a, gamma0, gamma) = (2.0, -7.0, [0.5, -1.5]);
    let ys: Vec<f64> = (0..train.len())
        .map(|i| {
            let x = train.input(i);
            a * train.targets()[i] + gamma0 + gamma[0] * x[0] + gamma[1] * x[1]
        })
        .collect();
    let moved = TrainingSet::new(2, train.inputs().to_vec(), ys, train.time_indices().to_vec()).unwrap();
    for &alpha in &[0.2, 0.5, 0.95] {
        let c = fit_qlr(&train, alpha).unwrap();
        let d = fit_qlr(&moved, alpha).unwrap();
        assert!((d.intercept - (a * c.intercept + gamma0)).abs() < 1e-6);
        for k in 0..2 {
            assert!((d.slopes[k] - (a * c.slopes[k] + gamma[k])).abs() < 1e-6);
        }
        let ratio = qlr_objective(&moved, &d) / qlr_objective(&train, &c);
        assert!((ratio - a).abs() < 1e-8);
    }
}

#[test]
fn beats_least_squares_under_pinball_loss() {
    let train = fixture(13, 400, 3);
    let p = 4;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for i in 0..train.len() {
        let row = design_row(&train, i);
        for j in 0..p {
            xty[j] += row[j] * train.targets()[i];
            for k in 0..p {
                xtx[j][k] += row[j] * row[k];
            }
        }
    }
    let ls = solve(xtx, xty).unwrap();
    for &alpha in &[0.05, 0.5, 0.95] {
        let ls_coeffs = CoefficientVector::new(ls[0], ls[1..].to_vec(), alpha).unwrap();
        let qlr = fit_qlr(&train, alpha).unwrap();
        assert!(qlr_objective(&train, &qlr) <= qlr_objective(&train, &ls_coeffs));
    }
}

#[test]
fn rearranged_predictions_are_monotone() {
    let train = fixture(2, 60, 3);
    let grid = Arc::new(QuantileGrid::standard());
    let model = QlrModel::fit(&train, &grid).unwrap();
    let far = [40.0, -40.0, 40.0];
    let sorted = model.predict(&far, true).unwrap();
    assert!(sorted.is_monotone());
    let raw = model.predict(&far, false).unwrap();
    let mut resorted = raw.values().to_vec();
    resorted.sort_by(f64::total_cmp);
    assert_eq!(resorted, sorted.values());
}
