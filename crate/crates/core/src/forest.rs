//! CART regression trees and random forests.
//!
//! Trees are grown on a bootstrap resample, but every leaf remembers all of
//! the ORIGINAL training patterns that route to it. Those member lists give
//! the forest prediction weights
//!
//! ```text
//! w_tau(x) = 1/p * sum_j 1{tau in leaf_j(x)} / |leaf_j(x)|
//! ```
//!
//! which drive both the conditional mean (RF) and the conditional CDF (QRF).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::TrainingSet;
use crate::error::{Error, Result};
use crate::seed;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Number of trees `p`.
    pub trees: usize,
    /// Minimum bootstrap observations per leaf `q`.
    pub min_leaf: usize,
    /// Features drawn per split `r`; `None` means `max(1, floor(n / 3))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    /// Grow on a bootstrap resample (the default) or on the full sample.
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_features(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features / 3).max(1))
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("minimum leaf size must be at least 1"));
        }
        let r = self.resolved_features(n_features);
        if n_features > 0 && !(1..=n_features).contains(&r) {
            return Err(Error::invalid(format!(
                "features per split must lie in 1..={n_features}, got {r}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    /// CSR layout: members of leaf `l` are `members[offsets[l]..offsets[l + 1]]`.
    offsets: Vec<u32>,
    members: Vec<u32>,
    leaf_means: Vec<f64>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_means.len()
    }

    pub fn leaf_members(&self, leaf: usize) -> &[u32] {
        &self.members[self.offsets[leaf] as usize..self.offsets[leaf + 1] as usize]
    }

    pub fn leaf_mean(&self, leaf: usize) -> f64 {
        self.leaf_means[leaf]
    }

    /// Split at the root, if the tree is not a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }

    /// Leaf reached by dropping `x` down the tree (`x[f] <= threshold` goes left).
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                Node::Leaf { leaf } => return leaf,
            }
        }
    }
}

/// Column-major copy of the inputs with per-feature ascending orders.
struct Presorted<'a> {
    len: usize,
    n_features: usize,
    columns: Vec<f64>,
    order: Vec<u32>,
    targets: &'a [f64],
}

impl<'a> Presorted<'a> {
    fn new(train: &'a TrainingSet) -> Self {
        let len = train.len();
        let n_features = train.n_features();
        let mut columns = vec![0.0; len * n_features];
        for i in 0..len {
            for (f, &v) in train.input(i).iter().enumerate() {
                columns[f * len + i] = v;
            }
        }
        let mut order = Vec::with_capacity(len * n_features);
        for f in 0..n_features {
            let col = &columns[f * len..(f + 1) * len];
            let mut idx: Vec<u32> = (0..len as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            order.extend_from_slice(&idx);
        }
        Self {
            len,
            n_features,
            columns,
            order,
            targets: train.targets(),
        }
    }

    fn column(&self, f: usize) -> &[f64] {
        &self.columns[f * self.len..(f + 1) * self.len]
    }
}

/// Multiplicities of a size-`len` bootstrap resample; the first draws a tree makes.
pub fn draw_bootstrap<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u32> {
    let mut counts = vec![0u32; len];
    for _ in 0..len {
        counts[rng.random_range(0..len)] += 1;
    }
    counts
}

struct Candidate {
    score: f64,
    feature: usize,
    /// Last position (within the node segment) that goes left.
    cut: usize,
    threshold: f64,
}

fn grow<R: Rng + ?Sized>(data: &Presorted<'_>, params: &ForestParams, rng: &mut R) -> RegressionTree {
    let len = data.len;
    let n = data.n_features;
    let counts = if params.bootstrap {
        draw_bootstrap(len, rng)
    } else {
        vec![1u32; len]
    };
    let min_leaf = params.min_leaf as f64;
    let r = params.resolved_features(n).min(n);

    let in_bag = counts.iter().filter(|&&c| c > 0).count();
    // Block f holds the in-bag indices sorted by feature f; every node owns
    // the same [lo, hi) range inside each block.
    let mut blocks = Vec::with_capacity(in_bag * n);
    for f in 0..n {
        blocks.extend(
            data.order[f * len..(f + 1) * len]
                .iter()
                .copied()
                .filter(|&i| counts[i as usize] > 0),
        );
    }
    let mut goes_left = vec![false; len];
    let mut scratch = vec![0u32; in_bag.max(len - in_bag)];
    // Out-of-bag patterns are routed by threshold alongside the in-bag ones.
    let mut oob: Vec<u32> = (0..len as u32).filter(|&i| counts[i as usize] == 0).collect();
    let mut leaf_of = vec![0u32; len];

    let mut nodes = vec![Node::Leaf { leaf: usize::MAX }];
    let mut n_leaves = 0usize;
    let mut stack = vec![(0usize, in_bag, 0usize, 0usize, oob.len())];

    while let Some((lo, hi, id, olo, ohi)) = stack.pop() {
        let segment = |f: usize| &blocks[f * in_bag + lo..f * in_bag + hi];
        let first = if n > 0 {
            segment(0)
        } else {
            &blocks[..0]
        };

        let mut weight = 0.0;
        let mut sum = 0.0;
        for &i in first {
            let c = f64::from(counts[i as usize]);
            weight += c;
            sum += c * data.targets[i as usize];
        }
        let y0 = first.first().map(|&i| data.targets[i as usize]);
        let constant = first.iter().all(|&i| Some(data.targets[i as usize]) == y0);

        let mut best: Option<Candidate> = None;
        if n > 0 && !constant && weight >= 2.0 * min_leaf {
            let mean = sum / weight;
            let mut drawn = index::sample(rng, n, r).into_vec();
            drawn.sort_unstable();
            for &f in &drawn {
                let seg = segment(f);
                let col = data.column(f);
                let mut wl = 0.0;
                let mut sl = 0.0;
                for k in 0..seg.len() - 1 {
                    let i = seg[k] as usize;
                    let c = f64::from(counts[i]);
                    wl += c;
                    sl += c * (data.targets[i] - mean);
                    let (a, b) = (col[i], col[seg[k + 1] as usize]);
                    let wr = weight - wl;
                    if a < b && wl >= min_leaf && wr >= min_leaf {
                        // Minimising child SSE == maximising this between-group term.
                        let score = sl * sl * weight / (wl * wr);
                        if best.as_ref().is_none_or(|b| score > b.score) {
                            let mut threshold = a + (b - a) / 2.0;
                            if threshold >= b {
                                threshold = a;
                            }
                            best = Some(Candidate {
                                score,
                                feature: f,
                                cut: k,
                                threshold,
                            });
                        }
                    }
                }
            }
        }

        let Some(split) = best else {
            for &i in first.iter().chain(&oob[olo..ohi]) {
                leaf_of[i as usize] = n_leaves as u32;
            }
            nodes[id] = Node::Leaf { leaf: n_leaves };
            n_leaves += 1;
            continue;
        };

        let n_left = split.cut + 1;
        let chosen = segment(split.feature);
        for (k, &i) in chosen.iter().enumerate() {
            goes_left[i as usize] = k < n_left;
        }
        for f in (0..n).filter(|&f| f != split.feature) {
            let seg = &mut blocks[f * in_bag + lo..f * in_bag + hi];
            let (mut l, mut rr) = (0, n_left);
            for &i in seg.iter() {
                if goes_left[i as usize] {
                    scratch[l] = i;
                    l += 1;
                } else {
                    scratch[rr] = i;
                    rr += 1;
                }
            }
            seg.copy_from_slice(&scratch[..hi - lo]);
        }

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        let col = data.column(split.feature);
        let seg = &mut oob[olo..ohi];
        let (mut l, mut rr) = (0, seg.len());
        for &i in seg.iter() {
            if col[i as usize] <= split.threshold {
                scratch[l] = i;
                l += 1;
            } else {
                rr -= 1;
                scratch[rr] = i;
            }
        }
        scratch[l..seg.len()].reverse();
        seg.copy_from_slice(&scratch[..seg.len()]);
        stack.push((lo + n_left, hi, right, olo + l, ohi));
        stack.push((lo, lo + n_left, left, olo, olo + l));
    }

    let mut tree = RegressionTree {
        nodes,
        offsets: Vec::new(),
        members: Vec::new(),
        leaf_means: Vec::new(),
    };
    populate_leaves(&mut tree, data, n_leaves, &leaf_of);
    tree
}

/// Records leaf members (CSR, ascending index) and leaf means.
fn populate_leaves(tree: &mut RegressionTree, data: &Presorted<'_>, n_leaves: usize, leaf_of: &[u32]) {
    let mut offsets = vec![0u32; n_leaves + 1];
    for &l in leaf_of {
        offsets[l as usize + 1] += 1;
    }
    for l in 0..n_leaves {
        offsets[l + 1] += offsets[l];
    }
    let mut fill = offsets.clone();
    let mut members = vec![0u32; data.len];
    for (i, &l) in leaf_of.iter().enumerate() {
        members[fill[l as usize] as usize] = i as u32;
        fill[l as usize] += 1;
    }
    let leaf_means = (0..n_leaves)
        .map(|l| {
            let m = &members[offsets[l] as usize..offsets[l + 1] as usize];
            m.iter().map(|&i| data.targets[i as usize]).sum::<f64>() / m.len() as f64
        })
        .collect();
    tree.offsets = offsets;
    tree.members = members;
    tree.leaf_means = leaf_means;
}

/// Grows one tree. The first draws taken from `rng` are the bootstrap
/// multiplicities (see [`draw_bootstrap`]), then one feature subset per node.
pub fn fit_tree<R: Rng + ?Sized>(
    train: &TrainingSet,
    params: &ForestParams,
    rng: &mut R,
) -> Result<RegressionTree> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    params.validate(train.n_features())?;
    Ok(grow(&Presorted::new(train), params, rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    targets: Vec<f64>,
    /// Training indices sorted by target value.
    target_order: Vec<u32>,
    n_features: usize,
    params: ForestParams,
}

/// Fits `params.trees` trees, tree `j` drawing from its own ChaCha stream
/// seeded by `(params.seed, j)`.
pub fn fit_forest(train: &TrainingSet, params: &ForestParams) -> Result<Forest> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    params.validate(train.n_features())?;
    let data = Presorted::new(train);
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, &[j as u64]));
            grow(&data, params, &mut rng)
        })
        .collect();
    let targets = train.targets().to_vec();
    let mut target_order: Vec<u32> = (0..targets.len() as u32).collect();
    target_order.sort_by(|&a, &b| targets[a as usize].total_cmp(&targets[b as usize]));
    Ok(Forest {
        trees,
        targets,
        target_order,
        n_features: train.n_features(),
        params: params.clone(),
    })
}

/// Non-negative weights over the training patterns, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

impl Forest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn target_order(&self) -> &[u32] {
        &self.target_order
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.n_features {
            return Err(Error::Shape {
                what: "forest query",
                expected: self.n_features,
                got: query.len(),
            });
        }
        Ok(())
    }

    pub fn weights(&self, query: &[f64]) -> Result<WeightVector> {
        self.check_query(query)?;
        let mut weights = vec![0.0; self.targets.len()];
        let p = self.trees.len() as f64;
        for tree in &self.trees {
            let members = tree.leaf_members(tree.leaf_of(query));
            let w = 1.0 / (p * members.len() as f64);
            for &i in members {
                weights[i as usize] += w;
            }
        }
        Ok(WeightVector { weights })
    }

    /// Weighted mean of training targets; equal to averaging leaf means.
    pub fn mean(&self, query: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        let total: f64 = self
            .trees
            .iter()
            .map(|t| t.leaf_mean(t.leaf_of(query)))
            .sum();
        Ok(total / self.trees.len() as f64)
    }
}

impl Forest {
    /// Forest mean at every training pattern, from the stored leaf members.
    pub fn training_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.targets.len()];
        for tree in &self.trees {
            for leaf in 0..tree.n_leaves() {
                let m = tree.leaf_mean(leaf);
                for &i in tree.leaf_members(leaf) {
                    acc[i as usize] += m;
                }
            }
        }
        let p = self.trees.len() as f64;
        acc.iter_mut().for_each(|v| *v /= p);
        acc
    }
}

pub fn forest_weights(forest: &Forest, query: &[f64]) -> Result<WeightVector> {
    forest.weights(query)
}

pub fn forest_mean(forest: &Forest, query: &[f64]) -> Result<f64> {
    forest.mean(query)
}
