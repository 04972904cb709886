//! Random forest baseline: CART trees with Gini splits, bootstrap
//! resampling, and a random feature subset per node.
//!
//! Rows are fixed-width feature arrays (see [`crate::features`]). Growth
//! continues until leaves are pure or shrink to `min_leaf`; when the
//! sampled feature subset admits no valid split, further features are
//! inspected in shuffled order before giving up, so a single informative
//! feature is always found.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::features::FEATURE_COUNT;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Number of candidate features per node; defaults to ceil(sqrt(d)).
    pub max_features: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_features: 5, min_leaf: 1, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForestError {
    SingleClass,
    TooFewSamples,
    DimensionMismatch { expected: usize, got: usize },
    LengthMismatch,
}

impl fmt::Display for ForestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestError::SingleClass => write!(f, "training data holds a single class"),
            ForestError::TooFewSamples => write!(f, "need at least 2 samples"),
            ForestError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} features, got {got}")
            }
            ForestError::LengthMismatch => write!(f, "X and y lengths differ"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { histogram: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { histogram } => {
                    return argmax_class(histogram);
                }
            }
        }
    }
}

/// Largest count wins; ties break toward the smallest class id.
fn argmax_class(hist: &[u32]) -> usize {
    let mut best = 0usize;
    for (c, &v) in hist.iter().enumerate() {
        if v > hist[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    pub feature_count: usize,
}

type Row = [f64; FEATURE_COUNT];

fn gini(hist: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - hist.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a [Row],
    y: &'a [usize],
    n_classes: usize,
    cfg: ForestConfig,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<u32> {
        let mut h = vec![0u32; self.n_classes];
        for &i in idx {
            h[self.y[i]] += 1;
        }
        h
    }

    /// Best (threshold, gain) for one feature over the node's samples, or
    /// None when the feature is constant there.
    fn best_split_on(&self, idx: &[usize], feature: usize, parent: f64) -> Option<(f64, f64)> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_unstable_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let total = order.len() as u32;
        let mut left = vec![0u32; self.n_classes];
        let mut right = self.histogram(idx);
        let mut best: Option<(f64, f64)> = None;
        for cut in 1..order.len() {
            let moved = order[cut - 1];
            left[self.y[moved]] += 1;
            right[self.y[moved]] -= 1;
            let (lo, hi) = (self.x[order[cut - 1]][feature], self.x[order[cut]][feature]);
            if lo == hi {
                continue;
            }
            let nl = cut as u32;
            let nr = total - nl;
            if (nl as usize) < self.cfg.min_leaf || (nr as usize) < self.cfg.min_leaf {
                continue;
            }
            let w = nl as f64 / total as f64;
            let gain = parent - w * gini(&left, nl) - (1.0 - w) * gini(&right, nr);
            let threshold = 0.5 * (lo + hi);
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((threshold, gain));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, rng: &mut Rng) -> usize {
        let hist = self.histogram(&idx);
        let total = idx.len() as u32;
        let parent = gini(&hist, total);
        let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() <= self.cfg.min_leaf {
            self.nodes.push(Node::Leaf { histogram: hist });
            return self.nodes.len() - 1;
        }
        // Inspect features in shuffled order until max_features splittable
        // ones have been scored (or all are exhausted).
        let mut features: Vec<usize> = (0..FEATURE_COUNT).collect();
        rng.shuffle(&mut features);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut inspected = 0usize;
        for &f in &features {
            if inspected >= self.cfg.max_features {
                break;
            }
            if let Some((threshold, gain)) = self.best_split_on(&idx, f, parent) {
                inspected += 1;
                if best.map_or(true, |(_, _, g)| gain > g) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        match best {
            None => {
                self.nodes.push(Node::Leaf { histogram: hist });
                self.nodes.len() - 1
            }
            Some((feature, threshold, _)) => {
                let (mut li, mut ri) = (Vec::new(), Vec::new());
                for &i in &idx {
                    if self.x[i][feature] <= threshold {
                        li.push(i);
                    } else {
                        ri.push(i);
                    }
                }
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { histogram: Vec::new() }); // placeholder
                let left = self.grow(li, rng);
                let right = self.grow(ri, rng);
                self.nodes[slot] = Node::Split { feature, threshold, left, right };
                slot
            }
        }
    }
}

/// Train a forest and report out-of-bag accuracy (NaN when bootstrap is
/// off or no sample was ever out of bag).
pub fn train_forest_oob(
    x: &[Row],
    y: &[usize],
    cfg: &ForestConfig,
    rng: &mut Rng,
) -> Result<(ForestModel, f64), ForestError> {
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch);
    }
    if x.len() < 2 {
        return Err(ForestError::TooFewSamples);
    }
    let n_classes = y.iter().copied().max().unwrap() + 1;
    let distinct = {
        let mut seen = vec![false; n_classes];
        for &c in y {
            seen[c] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(ForestError::SingleClass);
    }
    let n = x.len();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut oob_votes = vec![vec![0u32; n_classes]; n];
    for t in 0..cfg.n_trees {
        let mut tree_rng = rng.fork(t as u64);
        let (sample, in_bag): (Vec<usize>, Vec<bool>) = if cfg.bootstrap {
            let mut in_bag = vec![false; n];
            let mut sample = Vec::with_capacity(n);
            for _ in 0..n {
                let i = tree_rng.below(n as u64) as usize;
                in_bag[i] = true;
                sample.push(i);
            }
            (sample, in_bag)
        } else {
            ((0..n).collect(), vec![true; n])
        };
        let mut builder =
            TreeBuilder { x, y, n_classes, cfg: *cfg, nodes: Vec::new() };
        builder.grow(sample, &mut tree_rng);
        let tree = Tree { nodes: builder.nodes };
        for (i, bagged) in in_bag.iter().enumerate() {
            if !bagged {
                oob_votes[i][tree.predict(&x[i])] += 1;
            }
        }
        trees.push(tree);
    }
    let mut correct = 0usize;
    let mut counted = 0usize;
    for (i, votes) in oob_votes.iter().enumerate() {
        if votes.iter().any(|&v| v > 0) {
            counted += 1;
            if argmax_class(votes) == y[i] {
                correct += 1;
            }
        }
    }
    let oob = if counted == 0 { f64::NAN } else { correct as f64 / counted as f64 };
    Ok((ForestModel { trees, n_classes, feature_count: FEATURE_COUNT }, oob))
}

pub fn train_forest(
    x: &[Row],
    y: &[usize],
    cfg: &ForestConfig,
    rng: &mut Rng,
) -> Result<ForestModel, ForestError> {
    train_forest_oob(x, y, cfg, rng).map(|(m, _)| m)
}

/// Majority vote over trees; ties break toward the smallest class id.
pub fn forest_predict(model: &ForestModel, x: &[Row]) -> Result<Vec<usize>, ForestError> {
    // Row width is fixed by the type; keep the check for future dynamic rows.
    if model.feature_count != FEATURE_COUNT {
        return Err(ForestError::DimensionMismatch {
            expected: model.feature_count,
            got: FEATURE_COUNT,
        });
    }
    Ok(x.iter()
        .map(|row| {
            let mut votes = vec![0u32; model.n_classes];
            for tree in &model.trees {
                votes[tree.predict(row)] += 1;
            }
            argmax_class(&votes)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(f0: f64) -> Row {
        let mut r = [0.0; FEATURE_COUNT];
        r[0] = f0;
        r
    }

    #[test]
    fn separable_single_feature_fits_exactly() {
        let x: Vec<Row> = (0..40).map(|i| row(i as f64 / 40.0)).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let mut rng = Rng::new(1);
        let model = train_forest(&x, &y, &ForestConfig::default(), &mut rng).unwrap();
        assert_eq!(forest_predict(&model, &x).unwrap(), y);
    }

    #[test]
    fn random_labels_give_chance_level_oob() {
        let mut rng = Rng::new(2);
        let n = 200;
        let x: Vec<Row> = (0..n)
            .map(|_| {
                let mut r = [0.0; FEATURE_COUNT];
                for v in r.iter_mut() {
                    *v = rng.next_f64();
                }
                r
            })
            .collect();
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect(); // balanced, independent of x
        let mut accs = Vec::new();
        for seed in 0..5 {
            let mut train_rng = Rng::new(100 + seed);
            let (_, oob) = train_forest_oob(&x, &y, &ForestConfig::default(), &mut train_rng)
                .unwrap();
            accs.push(oob);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((0.4..=0.6).contains(&mean), "oob mean {mean}");
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let mut rng = Rng::new(3);
        let n = 60;
        let x: Vec<Row> = (0..n)
            .map(|_| {
                let mut r = [0.0; FEATURE_COUNT];
                for v in r.iter_mut() {
                    *v = rng.next_f64();
                }
                r
            })
            .collect();
        let y: Vec<usize> = (0..n).map(|i| (i / 20) % 3).collect();
        let m1 = train_forest(&x, &y, &ForestConfig::default(), &mut Rng::new(7)).unwrap();
        let m2 = train_forest(&x, &y, &ForestConfig::default(), &mut Rng::new(7)).unwrap();
        assert_eq!(forest_predict(&m1, &x).unwrap(), forest_predict(&m2, &x).unwrap());
        assert_eq!(m1, m2);
    }

    #[test]
    fn single_class_rejected() {
        let x: Vec<Row> = (0..10).map(|i| row(i as f64)).collect();
        let y = vec![1usize; 10];
        let mut rng = Rng::new(4);
        assert_eq!(
            train_forest(&x, &y, &ForestConfig::default(), &mut rng).unwrap_err(),
            ForestError::SingleClass
        );
    }

    #[test]
    fn single_tree_forest_equals_tree_and_ties_break_low() {
        let x: Vec<Row> = (0..20).map(|i| row(i as f64)).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() };
        let mut rng = Rng::new(5);
        let model = train_forest(&x, &y, &cfg, &mut rng).unwrap();
        let preds = forest_predict(&model, &x).unwrap();
        for (i, &p) in preds.iter().enumerate() {
            assert_eq!(p, model.trees[0].predict(&x[i]));
        }
        // Hand-built 2-tree tie: constant leaf trees voting for different
        // classes; the smaller class id must win.
        let t0 = Tree { nodes: vec![Node::Leaf { histogram: vec![0, 0, 5] }] };
        let t1 = Tree { nodes: vec![Node::Leaf { histogram: vec![0, 5, 0] }] };
        let tied =
            ForestModel { trees: vec![t0, t1], n_classes: 3, feature_count: FEATURE_COUNT };
        assert_eq!(forest_predict(&tied, &x[..1]).unwrap(), vec![1]);
    }

    #[test]
    fn monotone_feature_transform_preserves_predictions() {
        let mut rng = Rng::new(6);
        let n = 80;
        let x: Vec<Row> = (0..n)
            .map(|_| {
                let mut r = [0.0; FEATURE_COUNT];
                for v in r.iter_mut().take(4) {
                    *v = rng.next_f64() * 2.0 - 1.0;
                }
                r
            })
            .collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + 0.3 * r[1] > 0.0)).collect();
        let warp = |v: f64| v * v * v + 2.0 * v; // strictly increasing
        let mut xw = x.clone();
        for r in xw.iter_mut() {
            r[1] = warp(r[1]);
        }
        let cfg = ForestConfig { n_trees: 15, ..Default::default() };
        let m_plain = train_forest(&x, &y, &cfg, &mut Rng::new(9)).unwrap();
        let m_warp = train_forest(&xw, &y, &cfg, &mut Rng::new(9)).unwrap();
        assert_eq!(
            forest_predict(&m_plain, &x).unwrap(),
            forest_predict(&m_warp, &xw).unwrap()
        );
    }
}
