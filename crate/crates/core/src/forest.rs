//! CART decision trees (Gini impurity) and bootstrap random forests over
//! sparse vectors. Absent features read as 0.0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_classes: usize,
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    All,
    Sqrt,
}

impl FeatureSubsample {
    fn count(self, n_features: usize) -> usize {
        match self {
            FeatureSubsample::All => n_features,
            FeatureSubsample::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: FeatureSubsample,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            max_features: FeatureSubsample::All,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            bootstrap: true,
            tree: TreeParams {
                max_features: FeatureSubsample::Sqrt,
                ..TreeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
}

pub fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Size-weighted child impurity.
    pub impurity: f64,
}

/// Best midpoint threshold for one feature over `samples`, requiring at
/// least `min_leaf` samples per side. Ties keep the lowest threshold.
pub fn best_threshold(
    x: &[SparseVector],
    y: &[usize],
    samples: &[usize],
    feature: usize,
    n_classes: usize,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let mut vals: Vec<(f64, usize)> = samples.iter().map(|&s| (x[s].get(feature), y[s])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = vals.len();
    let mut right = vec![0usize; n_classes];
    for &(_, l) in &vals {
        right[l] += 1;
    }
    let mut left = vec![0usize; n_classes];
    let mut best: Option<SplitCandidate> = None;
    for i in 0..n.saturating_sub(1) {
        let l = vals[i].1;
        left[l] += 1;
        right[l] -= 1;
        if vals[i].0 == vals[i + 1].0 {
            continue;
        }
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let impurity = (n_left as f64 * gini(&left, n_left) + n_right as f64 * gini(&right, n_right)) / n as f64;
        if best.is_none_or(|b| impurity < b.impurity) {
            best = Some(SplitCandidate {
                feature,
                threshold: 0.5 * (vals[i].0 + vals[i + 1].0),
                impurity,
            });
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [SparseVector],
    y: &'a [usize],
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    present: Vec<bool>,
}

impl Builder<'_> {
    fn leaf(&mut self, samples: &[usize]) -> u32 {
        let mut counts = vec![0u32; self.n_classes];
        for &s in samples {
            counts[self.y[s]] += 1;
        }
        self.nodes.push(Node::Leaf { counts });
        (self.nodes.len() - 1) as u32
    }

    // Features are visited in random order (natural order when all are
    // used); constant ones do not count towards the budget, so a split is
    // found whenever one exists.
    fn find_split(&mut self, samples: &[usize]) -> Option<SplitCandidate> {
        let budget = self.params.max_features.count(self.n_features);
        let all = budget >= self.n_features;

        let mut support: Vec<u32> = samples
            .iter()
            .flat_map(|&s| self.x[s].indices().iter().copied())
            .filter(|&j| (j as usize) < self.n_features)
            .collect();
        support.sort_unstable();
        support.dedup();
        for &j in &support {
            self.present[j as usize] = true;
        }

        let mut perm: Vec<u32> = Vec::new();
        if !all {
            perm = (0..self.n_features as u32).collect();
        }
        let mut examined = 0usize;
        let mut best: Option<SplitCandidate> = None;
        for k in 0..self.n_features {
            let feature = if all {
                k
            } else {
                let pick = self.rng.random_range(k..self.n_features);
                perm.swap(k, pick);
                perm[k] as usize
            };
            // features absent from every sample are constant zero
            if !self.present[feature] {
                continue;
            }
            if let Some(c) = best_threshold(self.x, self.y, samples, feature, self.n_classes, self.params.min_leaf) {
                if best.is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
            examined += 1;
            if !all && examined >= budget && best.is_some() {
                break;
            }
        }
        for &j in &support {
            self.present[j as usize] = false;
        }
        best
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> u32 {
        let first = self.y[samples[0]];
        let pure = samples.iter().all(|&s| self.y[s] == first);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || samples.len() < 2 * self.params.min_leaf {
            return self.leaf(&samples);
        }
        let Some(split) = self.find_split(&samples) else {
            return self.leaf(&samples);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| self.x[s].get(split.feature) <= split.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id as u32
    }
}

fn check(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("cannot train a tree on empty data"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} inputs but {} labels", x.len(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("label index {bad} out of range")));
    }
    if let Some(bad) = x.iter().find(|v| v.min_dim() > n_features) {
        return Err(Error::Dimension {
            expected: n_features,
            found: bad.min_dim(),
        });
    }
    Ok(())
}

fn grow(
    x: &[SparseVector],
    y: &[usize],
    samples: Vec<usize>,
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
    rng: ChaCha8Rng,
) -> Tree {
    let mut b = Builder {
        x,
        y,
        n_classes,
        n_features,
        params,
        rng,
        nodes: Vec::new(),
        present: vec![false; n_features],
    };
    b.build(samples, 0);
    Tree {
        n_classes,
        n_features,
        nodes: b.nodes,
    }
}

pub fn train_tree(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    params: &TreeParams,
) -> Result<Tree> {
    check(x, y, n_classes, n_features)?;
    let rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok(grow(x, y, (0..x.len()).collect(), n_classes, n_features, *params, rng))
}

/// Tree `i` draws its bootstrap sample and feature order from seed + i.
pub fn train_forest(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    n_features: usize,
    params: &ForestParams,
) -> Result<Forest> {
    check(x, y, n_classes, n_features)?;
    if params.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be at least 1"));
    }
    let n = x.len();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|i| {
            let tree_params = TreeParams {
                seed: params.tree.seed.wrapping_add(i as u64),
                ..params.tree
            };
            let mut rng = ChaCha8Rng::seed_from_u64(tree_params.seed);
            let samples = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, samples, n_classes, n_features, tree_params, rng)
        })
        .collect();
    Ok(Forest { trees, params: *params })
}

fn argmax_counts<T: Copy + PartialOrd>(v: &[T]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

impl Tree {
    fn leaf_for(&self, x: &SparseVector) -> &[u32] {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        if x.min_dim() > self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: x.min_dim(),
            });
        }
        Ok(argmax_counts(self.leaf_for(x)))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Forest {
    pub fn n_classes(&self) -> usize {
        self.trees[0].n_classes
    }

    /// Majority over trees; ties go to the lowest class index.
    pub fn predict(&self, x: &SparseVector) -> Result<(usize, Vec<f64>)> {
        let mut votes = vec![0usize; self.n_classes()];
        for t in &self.trees {
            votes[t.predict(x)?] += 1;
        }
        let total = self.trees.len() as f64;
        let shares = votes.iter().map(|&v| v as f64 / total).collect();
        Ok((argmax_counts(&votes), shares))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Vec<SparseVector> {
        values.iter().map(|&v| SparseVector::from_pairs(vec![(0, v)])).collect()
    }

    #[test]
    fn single_class_is_single_leaf() {
        let x = column(&[0.1, 0.5, 0.9]);
        let t = train_tree(&x, &[2, 2, 2], 3, 1, &TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&x[0]).unwrap(), 2);
    }

    #[test]
    fn threshold_data_needs_one_split() {
        let x = column(&[-2.0, -1.0, -0.5, 0.0, 0.5, 3.0]);
        let y = [0, 0, 0, 1, 1, 1];
        let t = train_tree(&x, &y, 2, 1, &TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 1);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(t.predict(xi).unwrap(), yi);
        }
    }

    #[test]
    fn best_threshold_matches_exhaustive_enumeration() {
        let vals = [0.3, 0.1, 0.7, 0.3, 0.9, 0.0];
        let y = [1, 0, 2, 0, 2, 1];
        let x = column(&vals);
        let samples: Vec<usize> = (0..6).collect();
        let got = best_threshold(&x, &y, &samples, 0, 3, 1).unwrap();

        // brute force: every midpoint, impurity from raw definitions
        let mut distinct = vals.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let gini_of = |idx: &[usize]| -> f64 {
            let n = idx.len() as f64;
            1.0 - (0..3)
                .map(|c| (idx.iter().filter(|&&i| y[i] == c).count() as f64 / n).powi(2))
                .sum::<f64>()
        };
        let mut best = (f64::INFINITY, f64::NAN);
        for w in distinct.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = (0..6).filter(|&i| vals[i] <= thr).collect();
            let right: Vec<usize> = (0..6).filter(|&i| vals[i] > thr).collect();
            let imp = (left.len() as f64 * gini_of(&left) + right.len() as f64 * gini_of(&right)) / 6.0;
            if imp < best.0 {
                best = (imp, thr);
            }
        }
        assert!((got.impurity - best.0).abs() < 1e-12);
        assert_eq!(got.threshold, best.1);
    }

    #[test]
    fn max_depth_is_respected() {
        let x = column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = [0, 1, 0, 1, 0, 1, 0, 1];
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let t = train_tree(&x, &y, 2, 1, &params).unwrap();
        assert!(t.depth() <= 2);
        let full = train_tree(&x, &y, 2, 1, &TreeParams::default()).unwrap();
        assert!(x.iter().zip(&y).all(|(xi, &yi)| full.predict(xi).unwrap() == yi));
    }

    #[test]
    fn empty_data_errors() {
        assert!(train_tree(&[], &[], 2, 1, &TreeParams::default()).is_err());
    }

    #[test]
    fn forest_is_deterministic() {
        let x = column(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let y = [0, 0, 1, 0, 1, 1, 1];
        let p = ForestParams {
            n_estimators: 10,
            ..ForestParams::default()
        };
        assert_eq!(
            train_forest(&x, &y, 2, 1, &p).unwrap(),
            train_forest(&x, &y, 2, 1, &p).unwrap()
        );
    }

    #[test]
    fn tied_votes_go_to_lower_class() {
        let leaf = |c: usize| Tree {
            n_classes: 2,
            n_features: 1,
            nodes: vec![Node::Leaf {
                counts: if c == 0 { vec![1, 0] } else { vec![0, 1] },
            }],
        };
        let trees = (0..100).map(|i| leaf(usize::from(i % 2 == 0))).collect();
        let f = Forest {
            trees,
            params: ForestParams::default(),
        };
        let (label, shares) = f.predict(&SparseVector::default()).unwrap();
        assert_eq!(label, 0);
        assert_eq!(shares, vec![0.5, 0.5]);
    }
}
