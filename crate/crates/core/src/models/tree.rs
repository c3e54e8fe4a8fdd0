//! CART classification tree grown on Gini impurity.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Splits must reduce weighted impurity by more than this to be taken.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Instances with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        proba: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Pre-order; index 0 is the root.
    pub nodes: Vec<Node>,
    pub params: TreeParams,
    pub n_features: usize,
    pub n_classes: usize,
    /// Summed weighted impurity decrease per feature (unnormalized).
    pub impurity_decrease: Vec<f64>,
}

/// Row-major training view: `rows[i]` has `labels[i]`.
pub(crate) struct TrainView<'a> {
    pub rows: &'a [&'a [f64]],
    pub labels: &'a [usize],
    pub n_features: usize,
    pub n_classes: usize,
}

/// `n * gini = n - sum(c^2) / n`.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct Builder<'a, 'b, R: Rng> {
    view: &'b TrainView<'a>,
    params: TreeParams,
    mtry: Option<usize>,
    rng: &'b mut R,
    nodes: Vec<Node>,
    decrease: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> Builder<'_, '_, R> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.view.n_classes];
        for &i in idx {
            counts[self.view.labels[i]] += 1;
        }
        counts
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.view.n_features;
        match self.mtry {
            Some(m) if m < p => {
                let mut f = index::sample(self.rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let parent = weighted_gini(counts, n);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for feature in self.candidate_features() {
            let rows = self.view.rows;
            order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
            let mut left = vec![0usize; counts.len()];
            for pos in 1..n {
                left[self.view.labels[order[pos - 1]]] += 1;
                let lo = rows[order[pos - 1]][feature];
                let hi = rows[order[pos]][feature];
                if lo == hi || pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let gain = parent - weighted_gini(&left, pos) - weighted_gini(&right, n - pos);
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    // Adjacent floats: keep `lo` so the partition is unchanged.
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn leaf(counts: &[usize], n: usize) -> Node {
        Node::Leaf {
            proba: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        }
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.class_counts(idx);
        let n = idx.len();
        self.nodes.push(Self::leaf(&counts, n));

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped {
            return id;
        }
        let Some(split) = self.best_split(idx, &counts) else {
            return id;
        };
        self.decrease[split.feature] += split.gain;
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.view.rows[i][split.feature] <= split.threshold);
        let left = self.grow(&left_idx, depth + 1);
        let right = self.grow(&right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on the instances listed in `sample` (duplicates allowed).
    pub(crate) fn fit<R: Rng>(
        view: &TrainView<'_>,
        sample: &[usize],
        params: TreeParams,
        mtry: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let mut builder = Builder {
            view,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
            decrease: vec![0.0; view.n_features],
        };
        builder.grow(sample, 0);
        Self {
            nodes: builder.nodes,
            params,
            n_features: view.n_features,
            n_classes: view.n_classes,
            impurity_decrease: builder.decrease,
        }
    }

    pub fn predict_proba_values(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn has_splits(&self) -> bool {
        self.nodes.len() > 1
    }
}
