use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, majority_of_counts, Classifier, ClassifierError, Result};
use crate::features::FeatureMatrix;

/// How many features are examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    All,
    /// `⌈√d⌉` features.
    Sqrt,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            FeatureSubsample::All => d,
            FeatureSubsample::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            FeatureSubsample::Count(m) => m.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub features: FeatureSubsample,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            features: FeatureSubsample::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree grown by minimizing weighted Gini impurity.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
    depth: usize,
}

/// Gini impurity `1 − Σ pᵢ²` of a class histogram; 0 for an empty one.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted mean Gini impurity of the two sides of a split.
pub fn split_gini(left: &[usize], right: &[usize]) -> f64 {
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = (nl + nr) as f64;
    if n == 0.0 {
        return 0.0;
    }
    (nl as f64 * gini(left) + nr as f64 * gini(right)) / n
}

struct Builder<'a, R: Rng> {
    x: &'a FeatureMatrix,
    labels: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    m_try: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    depth: usize,
    features: Vec<usize>,
    pairs: Vec<(f64, usize)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &i in samples {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn build(&mut self, samples: &mut [usize], depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let counts = self.counts(samples);
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || capped || samples.len() < 2 {
            self.nodes.push(Node::Leaf { counts });
            return id;
        }
        let Some(best) = self.best_split(samples, &counts) else {
            self.nodes.push(Node::Leaf { counts });
            return id;
        };
        self.nodes.push(Node::Leaf { counts });
        let (feature, threshold) = (best.feature, best.threshold);
        let x = self.x;
        let mut split = 0;
        for j in 0..samples.len() {
            if x.get(samples[j], feature) <= threshold {
                samples.swap(split, j);
                split += 1;
            }
        }
        let (l, r) = samples.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Best split over a random candidate subset of features. Visits at least
    /// `m_try` features and keeps drawing while every visited feature is
    /// constant on this node. Zero-gain splits are allowed.
    fn best_split(&mut self, samples: &[usize], parent: &[usize]) -> Option<BestSplit> {
        self.features.shuffle(self.rng);
        let m = samples.len();
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0usize; self.n_classes];
        for visited in 0..self.features.len() {
            if visited >= self.m_try && best.is_some() {
                break;
            }
            let f = self.features[visited];
            self.pairs.clear();
            self.pairs.extend(samples.iter().map(|&i| (self.x.get(i, f), self.labels[i])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[m - 1].0 {
                continue;
            }
            // Maximizing Σl²/nl + Σr²/nr minimizes nl·Gini(l) + nr·Gini(r).
            left.iter_mut().for_each(|c| *c = 0);
            let mut right = parent.to_vec();
            let mut left_sq = 0.0f64;
            let mut right_sq: f64 = right.iter().map(|&c| (c * c) as f64).sum();
            for pos in 0..m - 1 {
                let c = self.pairs[pos].1;
                left_sq += (2 * left[c] + 1) as f64;
                right_sq -= (2 * right[c] - 1) as f64;
                left[c] += 1;
                right[c] -= 1;
                let (v, next) = (self.pairs[pos].0, self.pairs[pos + 1].0);
                if v == next {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let score = left_sq / nl + right_sq / (m as f64 - nl);
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Grows a tree on all rows of `x`.
pub fn tree_fit<R: Rng>(x: &FeatureMatrix, params: &TreeParams, rng: &mut R) -> Result<DecisionTree> {
    let mut samples: Vec<usize> = (0..x.rows()).collect();
    tree_fit_samples(x, &mut samples, params, rng)
}

/// Grows a tree on the given sample indices (duplicates allowed, as in a
/// bootstrap resample). The slice is reordered.
pub fn tree_fit_samples<R: Rng>(
    x: &FeatureMatrix,
    samples: &mut [usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree> {
    check_training(x)?;
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let d = x.cols();
    let mut builder = Builder {
        x,
        labels: x.labels(),
        n_classes: x.n_classes(),
        params,
        m_try: params.features.resolve(d),
        rng,
        nodes: Vec::new(),
        depth: 0,
        features: (0..d).collect(),
        pairs: Vec::with_capacity(samples.len()),
    };
    builder.build(samples, 0);
    Ok(DecisionTree {
        depth: builder.depth,
        nodes: builder.nodes,
        n_features: d,
        n_classes: x.n_classes(),
    })
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn from_parts(nodes: Vec<Node>, n_features: usize, n_classes: usize) -> Result<Self> {
        fn depth_of(nodes: &[Node], id: usize, guard: usize) -> Option<usize> {
            if guard > nodes.len() {
                return None;
            }
            match nodes.get(id)? {
                Node::Leaf { .. } => Some(0),
                Node::Split { left, right, .. } => {
                    Some(1 + depth_of(nodes, *left, guard + 1)?.max(depth_of(nodes, *right, guard + 1)?))
                }
            }
        }
        let depth = depth_of(&nodes, 0, 0).ok_or_else(|| ClassifierError::InvalidModel("malformed tree".into()))?;
        Ok(Self {
            nodes,
            n_features,
            n_classes,
            depth,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return majority_of_counts(counts),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

impl Classifier for DecisionTree {
    fn predict(&self, q: &FeatureMatrix) -> Result<Vec<usize>> {
        if q.cols() != self.n_features {
            return Err(ClassifierError::DimMismatch {
                expected: self.n_features,
                found: q.cols(),
            });
        }
        Ok((0..q.rows()).map(|i| self.predict_row(q.row(i))).collect())
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}
