//! Exact solver for the pinball-loss linear program
//!
//! ```text
//! min_b  sum_i rho_alpha(y_i - x_i' b)
//! ```
//!
//! Three stages:
//!
//! 1. Frisch-Newton interior point (Mehrotra predictor-corrector) on the
//!    bounded dual `max y'd  s.t. X'd = (1 - alpha) X'1, 0 <= d <= 1`.
//! 2. Purification: the `p` observations with smallest residuals that are
//!    linearly independent define a vertex.
//! 3. Edge descent: from the vertex, walk along edge directions with exact
//!    line searches (weighted-median steps) until no edge descends.
//!
//! For large problems with a warm start, observations whose residual sign
//! is confidently known are collapsed into two pseudo-observations; the
//! signs are verified on the full data afterwards and violators are put back.

use crate::error::{Error, Result};

pub(crate) const MAX_ITERATIONS: usize = 500;
const GAP_TOLERANCE: f64 = 1e-10;
const MIN_STEP: f64 = 1e-12;
const STEP_FRACTION: f64 = 0.9995;
/// Residuals below this (standardised units) count as zero in edge descent.
const ZERO_RESIDUAL: f64 = 1e-11;

/// Row-major design with `p` columns.
#[derive(Clone, Copy)]
pub(crate) struct Design<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub p: usize,
}

impl<'a> Design<'a> {
    fn rows(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn fitted(&self, i: usize, beta: &[f64]) -> f64 {
        dot(self.row(i), beta)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub beta: Vec<f64>,
    pub basis: Vec<usize>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
fn pinball(r: f64, alpha: f64) -> f64 {
    if r >= 0.0 {
        alpha * r
    } else {
        (alpha - 1.0) * r
    }
}

#[cfg(test)]
fn objective(d: Design<'_>, beta: &[f64], alpha: f64) -> f64 {
    (0..d.rows())
        .map(|i| pinball(d.y[i] - d.fitted(i, beta), alpha))
        .sum()
}

/// In-place Cholesky of a symmetric positive definite `p x p` matrix
/// (lower triangle). Returns false if a pivot is not positive.
fn cholesky(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Factorises `a`, adding a growing ridge if it is numerically indefinite.
fn factor_spd(mut a: Vec<f64>, p: usize) -> Option<Vec<f64>> {
    let scale = (0..p).map(|i| a[i * p + i].abs()).fold(0.0, f64::max).max(1e-300);
    let original = a.clone();
    let mut ridge = 0.0;
    for _ in 0..12 {
        if cholesky(&mut a, p) {
            return Some(a);
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        a.copy_from_slice(&original);
        for i in 0..p {
            a[i * p + i] += ridge;
        }
    }
    None
}

/// Inverse of a square matrix by Gauss-Jordan with partial pivoting.
fn invert(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        inv[i * p + i] = 1.0;
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r1, &r2| m[r1 * p + col].abs().total_cmp(&m[r2 * p + col].abs()))?;
        if m[pivot * p + col].abs() <= 1e-13 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..p {
                m.swap(pivot * p + k, col * p + k);
                inv.swap(pivot * p + k, col * p + k);
            }
        }
        let d = m[col * p + col];
        for k in 0..p {
            m[col * p + k] /= d;
            inv[col * p + k] /= d;
        }
        for r in 0..p {
            if r != col {
                let f = m[r * p + col];
                if f != 0.0 {
                    for k in 0..p {
                        m[r * p + k] -= f * m[col * p + k];
                        inv[r * p + k] -= f * inv[col * p + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Largest step in `[0, big]` keeping `v + t * dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(1e20, f64::min)
}

/// `sum_i q_i x_i x_i'` and `sum_i q_i t_i x_i` for the normal equations.
fn weighted_gram(d: Design<'_>, q: &[f64], out: &mut [f64]) {
    let p = d.p;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (row, &qi) in d.x.chunks_exact(p).zip(q) {
        for (a, (&xa, out_row)) in row.iter().zip(out.chunks_exact_mut(p)).enumerate() {
            let qa = qi * xa;
            for (o, &xb) in out_row[a..].iter_mut().zip(&row[a..]) {
                *o += qa * xb;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            out[a * p + b] = out[b * p + a];
        }
    }
}

fn weighted_rhs(d: Design<'_>, q: &[f64], t: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for ((row, &qi), &ti) in d.x.chunks_exact(d.p).zip(q).zip(t) {
        let w = qi * ti;
        for (o, &x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
}

/// Interior-point estimate of the coefficients.
pub(crate) fn interior_point(d: Design<'_>, alpha: f64) -> Result<(Vec<f64>, usize)> {
    let n = d.rows();
    let p = d.p;
    // Dual-problem data: minimise c'x, A x = b, 0 <= x <= 1, with A = X'.
    let c: Vec<f64> = d.y.iter().map(|v| -v).collect();
    let mut x = vec![1.0 - alpha; n];
    let mut s = vec![alpha; n];
    let mut b = vec![0.0; p];
    for i in 0..n {
        for (bk, &v) in b.iter_mut().zip(d.row(i)) {
            *bk += (1.0 - alpha) * v;
        }
    }

    // Least-squares start for the dual multipliers.
    let ones = vec![1.0; n];
    let mut gram = vec![0.0; p * p];
    weighted_gram(d, &ones, &mut gram);
    let chol = factor_spd(gram.clone(), p).ok_or(Error::SolverFailed {
        iterations: 0,
        gap: f64::NAN,
        alpha,
    })?;
    let mut ydual = vec![0.0; p];
    weighted_rhs(d, &ones, &c, &mut ydual);
    cholesky_solve(&chol, p, &mut ydual);

    let mut r: Vec<f64> = (0..n).map(|i| c[i] - d.fitted(i, &ydual)).collect();
    for v in &mut r {
        if *v == 0.0 {
            *v = 0.001;
        }
    }
    let mut z: Vec<f64> = r.iter().map(|&v| v.max(0.0)).collect();
    let mut w: Vec<f64> = z.iter().zip(&r).map(|(z, r)| z - r).collect();

    let gap_of = |x: &[f64], ydual: &[f64], w: &[f64]| {
        dot(&c, x) - dot(ydual, &b) + w.iter().sum::<f64>()
    };
    let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>();
    let mut gap = gap_of(&x, &ydual, &w);

    let mut q = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut dy = vec![0.0; p];
    let mut t = vec![0.0; n];

    let mut it = 0;
    while gap > GAP_TOLERANCE * scale {
        if it == MAX_ITERATIONS {
            return Err(Error::SolverFailed {
                iterations: it,
                gap: gap / scale,
                alpha,
            });
        }
        it += 1;

        // Affine-scaling direction.
        for i in 0..n {
            q[i] = 1.0 / (z[i] / x[i] + w[i] / s[i]);
            r[i] = z[i] - w[i];
        }
        weighted_gram(d, &q, &mut gram);
        // Near a degenerate vertex the weights blow up; the vertex stage
        // finishes from the current iterate.
        let Some(chol) = factor_spd(gram.clone(), p) else {
            break;
        };
        weighted_rhs(d, &q, &r, &mut dy);
        cholesky_solve(&chol, p, &mut dy);
        for i in 0..n {
            dx[i] = q[i] * (d.fitted(i, &dy) - r[i]);
            ds[i] = -dx[i];
            dz[i] = -z[i] * (dx[i] / x[i] + 1.0);
            dw[i] = -w[i] * (ds[i] / s[i] + 1.0);
        }
        let mut fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);

        if fp.min(fd) < 1.0 {
            // Centering-corrector step.
            let mu0 = dot(&z, &x) + dot(&w, &s);
            let mut g = 0.0;
            for i in 0..n {
                g += (z[i] + fd * dz[i]) * (x[i] + fp * dx[i])
                    + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]);
            }
            let mu = mu0 * (g / mu0).powi(3) / (2.0 * n as f64);
            for i in 0..n {
                let xi = mu * (1.0 / x[i] - 1.0 / s[i]);
                let cross = dx[i] * dz[i] / x[i] - ds[i] * dw[i] / s[i];
                t[i] = r[i] - xi + cross;
            }
            weighted_rhs(d, &q, &t, &mut dy);
            cholesky_solve(&chol, p, &mut dy);
            for i in 0..n {
                let dxdz = dx[i] * dz[i];
                let dsdw = ds[i] * dw[i];
                let step = q[i] * (d.fitted(i, &dy) - t[i]);
                dx[i] = step;
                ds[i] = -step;
                dz[i] = mu / x[i] - z[i] - z[i] / x[i] * step - dxdz / x[i];
                dw[i] = mu / s[i] - w[i] + w[i] / s[i] * step - dsdw / s[i];
            }
            fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        }

        if !(fp.is_finite() && fd.is_finite()) || fp.min(fd) < MIN_STEP {
            break;
        }
        let saved = ydual.clone();
        for i in 0..n {
            x[i] += fp * dx[i];
            s[i] += fp * ds[i];
            w[i] += fd * dw[i];
            z[i] += fd * dz[i];
        }
        for (yk, dk) in ydual.iter_mut().zip(&dy) {
            *yk += fd * dk;
        }
        gap = gap_of(&x, &ydual, &w);
        if !gap.is_finite() || ydual.iter().any(|v| !v.is_finite()) {
            ydual = saved;
            break;
        }
    }
    Ok((ydual.iter().map(|v| -v).collect(), it))
}

/// Picks `p` linearly independent observations, smallest residuals first.
fn purify(d: Design<'_>, beta: &[f64]) -> Option<Vec<usize>> {
    let p = d.p;
    let mut order: Vec<usize> = (0..d.rows()).collect();
    let resid: Vec<f64> = (0..d.rows())
        .map(|i| (d.y[i] - d.fitted(i, beta)).abs())
        .collect();
    order.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let row = d.row(i);
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for u in &ortho {
            let proj = dot(&v, u);
            for (vk, uk) in v.iter_mut().zip(u) {
                *vk -= proj * uk;
            }
        }
        let len = dot(&v, &v).sqrt();
        if len > 1e-9 * norm {
            v.iter_mut().for_each(|vk| *vk /= len);
            ortho.push(v);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

fn basis_matrix(d: Design<'_>, basis: &[usize]) -> Vec<f64> {
    basis.iter().flat_map(|&i| d.row(i).iter().copied()).collect()
}

/// Slope of `rho(r - g t)` at `t = 0+`.
fn edge_slope(r: f64, g: f64, alpha: f64) -> f64 {
    if r > ZERO_RESIDUAL {
        -alpha * g
    } else if r < -ZERO_RESIDUAL {
        (1.0 - alpha) * g
    } else if g > 0.0 {
        (1.0 - alpha) * g
    } else {
        -alpha * g
    }
}

/// Edge descent from the vertex defined by `basis`.
fn descend(d: Design<'_>, alpha: f64, mut basis: Vec<usize>) -> Result<(Vec<f64>, Vec<usize>, usize)> {
    let n = d.rows();
    let p = d.p;
    let mut in_basis = vec![false; n];
    let mut g = vec![0.0; n * p];
    let mut resid = vec![0.0; n];
    let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
    for pivot in 0..=MAX_ITERATIONS {
        let xb = basis_matrix(d, &basis);
        let inv = invert(&xb, p).ok_or(Error::SolverFailed {
            iterations: pivot,
            gap: f64::NAN,
            alpha,
        })?;
        let yb: Vec<f64> = basis.iter().map(|&i| d.y[i]).collect();
        // beta = inv * y_B
        let beta: Vec<f64> = (0..p).map(|a| dot(&inv[a * p..(a + 1) * p], &yb)).collect();
        in_basis.iter_mut().for_each(|v| *v = false);
        for &i in &basis {
            in_basis[i] = true;
        }
        // g[i][j] = x_i' inv[:, j]: residual i falls by g t when beta += t * inv[:, j].
        let mut slopes = vec![[0.0f64; 2]; p];
        let mut scale = vec![0.0f64; p];
        for i in 0..n {
            let row = d.row(i);
            let gi = &mut g[i * p..(i + 1) * p];
            for (j, gij) in gi.iter_mut().enumerate() {
                let mut acc = 0.0;
                for a in 0..p {
                    acc += row[a] * inv[a * p + j];
                }
                *gij = acc;
            }
            resid[i] = if in_basis[i] {
                0.0
            } else {
                d.y[i] - dot(row, &beta)
            };
            if !in_basis[i] {
                for j in 0..p {
                    slopes[j][0] += edge_slope(resid[i], gi[j], alpha);
                    slopes[j][1] += edge_slope(resid[i], -gi[j], alpha);
                    scale[j] += gi[j].abs();
                }
            }
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..p {
            // The leaving basis observation itself: residual -t (up) or +t (down).
            let up = slopes[j][0] + (1.0 - alpha);
            let down = slopes[j][1] + alpha;
            let tol = 1e-12 * (1.0 + scale[j]);
            for (slope, sign) in [(up, 1.0), (down, -1.0)] {
                if slope < -tol && best.is_none_or(|b| slope < b.0) {
                    best = Some((slope, j, sign));
                }
            }
        }
        let Some((slope0, j, sign)) = best else {
            return Ok((beta, basis, pivot));
        };

        // Exact line search: breakpoints where a non-basic residual hits zero.
        breaks.clear();
        for i in (0..n).filter(|&i| !in_basis[i]) {
            let gij = sign * g[i * p + j];
            let r = resid[i];
            if r.abs() > ZERO_RESIDUAL && gij != 0.0 && (r > 0.0) == (gij > 0.0) {
                breaks.push((r / gij, gij.abs(), i));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut slope = slope0;
        let mut entering = None;
        for &(_, weight, i) in &breaks {
            slope += weight;
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let Some(entering) = entering else {
            return Err(Error::SolverFailed {
                iterations: pivot,
                gap: f64::INFINITY,
                alpha,
            });
        };
        basis[j] = entering;
    }
    Err(Error::SolverFailed {
        iterations: MAX_ITERATIONS,
        gap: f64::NAN,
        alpha,
    })
}

/// Exact solution: interior point, purification, edge descent.
pub(crate) fn solve(d: Design<'_>, alpha: f64) -> Result<Solution> {
    let p = d.p;
    if d.rows() < p {
        return Err(Error::invalid("fewer observations than independent columns"));
    }
    let (beta0, iterations) = if d.rows() == p {
        (vec![0.0; p], 0)
    } else {
        interior_point(d, alpha)?
    };
    let basis = purify(d, &beta0).ok_or_else(|| Error::invalid("design is rank deficient"))?;
    let (beta, basis, pivots) = descend(d, alpha, basis)?;
    Ok(Solution {
        beta,
        basis,
        iterations: iterations + pivots,
    })
}

/// Leverage-style scale `sqrt(x_i' (X'X)^-1 x_i)` used to normalise residuals.
pub(crate) fn residual_bands(d: Design<'_>) -> Vec<f64> {
    let p = d.p;
    let ones = vec![1.0; d.rows()];
    let mut gram = vec![0.0; p * p];
    weighted_gram(d, &ones, &mut gram);
    let Some(l) = factor_spd(gram, p) else {
        return ones;
    };
    let mut v = vec![0.0; p];
    (0..d.rows())
        .map(|i| {
            // ||L^-1 x_i||
            let row = d.row(i);
            for k in 0..p {
                let mut s = row[k];
                for m in 0..k {
                    s -= l[k * p + m] * v[m];
                }
                v[k] = s / l[k * p + k];
            }
            dot(&v, &v).sqrt().max(1e-12)
        })
        .collect()
}

/// Exact solution using a nearby coefficient vector to collapse the
/// observations that are confidently above or below the fit.
pub(crate) fn solve_warm(
    d: Design<'_>,
    alpha: f64,
    warm: &[f64],
    bands: &[f64],
) -> Result<Solution> {
    let n = d.rows();
    let p = d.p;
    let mut half_width = 0.04f64;
    let min_keep = 30 * p;
    loop {
        if 2.0 * half_width * n as f64 + (min_keep as f64) >= 0.5 * n as f64 {
            return solve(d, alpha);
        }
        let scaled: Vec<f64> = (0..n)
            .map(|i| (d.y[i] - d.fitted(i, warm)) / bands[i])
            .collect();
        let lo_rank = (((alpha - half_width) * n as f64).floor().max(0.0) as usize).min(n - 1);
        let hi_rank = (((alpha + half_width) * n as f64).ceil() as usize).min(n - 1);
        let mut sorted = scaled.clone();
        let (_, &mut lo_cut, _) = sorted.select_nth_unstable_by(lo_rank, f64::total_cmp);
        let (_, &mut hi_cut, _) = sorted.select_nth_unstable_by(hi_rank, f64::total_cmp);
        // -1: globbed below the fit, 1: globbed above, 0: kept.
        let mut side: Vec<i8> = scaled
            .iter()
            .map(|&s| {
                if s < lo_cut {
                    -1
                } else if s > hi_cut {
                    1
                } else {
                    0
                }
            })
            .collect();

        for _fixup in 0..4 {
            let mut x = Vec::new();
            let mut y = Vec::new();
            let mut glob_lo = (vec![0.0; p], 0.0, 0usize);
            let mut glob_hi = (vec![0.0; p], 0.0, 0usize);
            for i in 0..n {
                let glob = match side[i] {
                    0 => {
                        x.extend_from_slice(d.row(i));
                        y.push(d.y[i]);
                        continue;
                    }
                    -1 => &mut glob_lo,
                    _ => &mut glob_hi,
                };
                for (gk, &v) in glob.0.iter_mut().zip(d.row(i)) {
                    *gk += v;
                }
                glob.1 += d.y[i];
                glob.2 += 1;
            }
            if y.len() < min_keep {
                break;
            }
            for glob in [&glob_lo, &glob_hi] {
                if glob.2 > 0 {
                    x.extend_from_slice(&glob.0);
                    y.push(glob.1);
                }
            }
            let reduced = Design { x: &x, y: &y, p };
            let sol = solve(reduced, alpha)?;
            let mut bad = 0usize;
            for i in 0..n {
                let r = d.y[i] - d.fitted(i, &sol.beta);
                if (side[i] == -1 && r > 0.0) || (side[i] == 1 && r < 0.0) {
                    side[i] = 0;
                    bad += 1;
                }
            }
            if bad == 0 {
                // Map the reduced basis back to original rows.
                let kept: Vec<usize> = (0..n).filter(|&i| side[i] == 0).collect();
                let basis = sol
                    .basis
                    .iter()
                    .map(|&b| kept.get(b).copied().unwrap_or(usize::MAX))
                    .collect();
                return Ok(Solution {
                    beta: sol.beta,
                    basis,
                    iterations: sol.iterations,
                });
            }
            if bad as f64 > 0.1 * y.len() as f64 {
                break;
            }
        }
        half_width *= 2.0;
    }
}
