//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

pub mod metric_cases;

use probstack::qlr::pinball;
use probstack::{Forest, ForestParams, TrainingSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small forest fixture: targets and features drawn from short integer
/// ranges so ties occur in both.
pub struct ForestFixture {
    pub train: TrainingSet,
    pub params: ForestParams,
    pub queries: Vec<Vec<f64>>,
}

pub fn forest_fixture(seed: u64) -> ForestFixture {
    let mut r = rng(seed);
    let n_rows = r.random_range(1..=30);
    let n_features = r.random_range(1..=3);
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .map(|_| (0..n_features).map(|_| f64::from(r.random_range(0..8))).collect())
        .collect();
    let targets: Vec<f64> = (0..n_rows).map(|_| f64::from(r.random_range(0..12)) * 0.5).collect();
    let params = ForestParams {
        trees: r.random_range(1..=3),
        min_leaf: r.random_range(1..=4),
        features_per_split: None,
        seed: r.random(),
        bootstrap: r.random_bool(0.8),
    };
    let queries = (0..4)
        .map(|_| (0..n_features).map(|_| r.random_range(-1.0..9.0)).collect())
        .collect();
    ForestFixture {
        train: TrainingSet::from_rows(&rows, &targets).unwrap(),
        params,
        queries,
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Brute-force QRF quantiles in exact rational arithmetic.
///
/// Leaf memberships are rebuilt by dropping every training pattern down
/// every tree; the weight of pattern i is (1/p) * sum over trees of
/// [i shares the query's leaf] / |leaf|. The alpha-quantile is the smallest
/// training target y with sum of weights over {y_j <= y} >= alpha, found by
/// scanning all targets.
pub fn brute_qrf_quantiles(forest: &Forest, train: &TrainingSet, query: &[f64]) -> Vec<f64> {
    let trees = forest.trees();
    let n = train.len();
    let mut shared: Vec<Vec<bool>> = Vec::new();
    let mut sizes: Vec<i128> = Vec::new();
    for tree in trees {
        let target_leaf = tree.leaf_of(query);
        let same: Vec<bool> = (0..n).map(|i| tree.leaf_of(train.input(i)) == target_leaf).collect();
        sizes.push(same.iter().filter(|&&s| s).count() as i128);
        shared.push(same);
    }
    let p = trees.len() as i128;
    let mut denom = 1i128;
    for &s in &sizes {
        denom = denom / gcd(denom, s) * s;
    }
    denom *= p;
    // Weight numerators over the common denominator.
    let numer: Vec<i128> = (0..n)
        .map(|i| {
            shared
                .iter()
                .zip(&sizes)
                .filter(|(same, _)| same[i])
                .map(|(_, &s)| denom / (p * s))
                .sum()
        })
        .collect();
    assert_eq!(numer.iter().sum::<i128>(), denom);
    let ys = train.targets();
    (1..=99i128)
        .map(|h| {
            let mut best: Option<f64> = None;
            for &y in ys {
                let mass: i128 = (0..n).filter(|&j| ys[j] <= y).map(|j| numer[j]).sum();
                if 100 * mass >= h * denom && best.is_none_or(|b| y < b) {
                    best = Some(y);
                }
            }
            best.expect("F reaches 1 at the largest target")
        })
        .collect()
}

/// Sum of squared deviations from the mean.
fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Exhaustive best root split: minimal child SSE over every feature and
/// every cut between distinct sorted values with both children holding at
/// least `min_leaf` patterns. None when no cut is admissible or the
/// targets are constant.
pub fn best_split_sse(train: &TrainingSet, min_leaf: usize) -> Option<f64> {
    let ys = train.targets();
    if ys.iter().all(|&y| y == ys[0]) {
        return None;
    }
    let mut best: Option<f64> = None;
    for f in 0..train.n_features() {
        let mut values: Vec<f64> = (0..train.len()).map(|i| train.input(i)[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (left, right): (Vec<usize>, Vec<usize>) =
                (0..train.len()).partition(|&i| train.input(i)[f] <= w[0]);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let l: Vec<f64> = left.iter().map(|&i| ys[i]).collect();
            let r: Vec<f64> = right.iter().map(|&i| ys[i]).collect();
            let total = sse(&l) + sse(&r);
            if best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
    }
    best
}

/// Child SSE of splitting `train` by `x[feature] <= threshold`.
pub fn split_sse(train: &TrainingSet, feature: usize, threshold: f64) -> f64 {
    let ys = train.targets();
    let (l, r): (Vec<f64>, Vec<f64>) = {
        let mut l = Vec::new();
        let mut r = Vec::new();
        for i in 0..train.len() {
            if train.input(i)[feature] <= threshold {
                l.push(ys[i]);
            } else {
                r.push(ys[i]);
            }
        }
        (l, r)
    };
    sse(&l) + sse(&r)
}

pub fn pinball_sum(ys: &[f64], fitted: impl Fn(usize) -> f64, alpha: f64) -> f64 {
    ys.iter()
        .enumerate()
        .map(|(i, &y)| pinball(y, fitted(i), alpha))
        .sum()
}

/// Minimal pinball objective of a one-feature linear quantile regression,
/// by enumerating every line through two points with distinct abscissae
/// and every horizontal line through a single point.
pub fn enumerate_line_objective(xs: &[f64], ys: &[f64], alpha: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..xs.len() {
        best = best.min(pinball_sum(ys, |_| ys[i], alpha));
        for j in (i + 1)..xs.len() {
            if xs[i] == xs[j] {
                continue;
            }
            let slope = (ys[j] - ys[i]) / (xs[j] - xs[i]);
            let intercept = ys[i] - slope * xs[i];
            best = best.min(pinball_sum(ys, |k| intercept + slope * xs[k], alpha));
        }
    }
    best
}

/// All minimisers of the intercept-only pinball objective on the hundredth
/// grid: `[y_(ceil(N a)), y_(floor(N a) + 1)]` in 1-based order statistics.
pub fn empirical_quantile_interval(sorted: &[f64], hundredths: u8) -> (f64, f64) {
    let n = sorted.len();
    let na = n * usize::from(hundredths);
    let lo = na.div_ceil(100);
    let hi = (na / 100 + 1).min(n);
    (sorted[lo.max(1) - 1], sorted[hi - 1])
}

/// k nearest rows by Euclidean distance, ties to the earlier time index,
/// returned in time order: full sort of all distances.
pub fn brute_knn(train: &TrainingSet, query: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..train.len())
        .map(|i| {
            let d: f64 = train
                .input(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (d, train.time_indices()[i])
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = all.into_iter().take(k).map(|(_, t)| t).collect();
    chosen.sort_unstable();
    chosen
}

pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let cov: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum();
    cov / var
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Short seeded panel inside a single calendar year, for fast end-to-end runs.
pub fn small_config(series_id: &str, days: usize, seed: u64) -> probstack::dataio::SynthConfig {
    let mut c = probstack::dataio::SynthConfig::benchmark_suite(seed)[0].clone();
    c.series_id = series_id.to_string();
    c.start = chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    c.days = days;
    c.seed = seed;
    c
}
