//! Bagged random forest with Gini importances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TrainView, TreeParams};
use super::{labelled_rows, ModelError};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features considered per split; `None` means `round(sqrt(p))`.
    pub mtry: Option<usize>,
    pub tree: TreeParams,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. Disabling trains every tree on the
    /// full set in its original order.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            tree: TreeParams::default(),
            seed: 42,
            bootstrap: true,
        }
    }
}

/// `round(sqrt(p))`, at least one.
pub fn default_mtry(n_features: usize) -> usize {
    ((n_features as f64).sqrt().round() as usize).max(1)
}

/// RNG for tree `index`: the seed selects the key, the index the stream.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub mtry: usize,
    pub seed: u64,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Normalized to sum to one, or all zero when no tree split.
    pub importances: Vec<f64>,
}

impl RandomForest {
    pub fn predict_proba_values(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.class_names.len()];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.predict_proba_values(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn has_splits(&self) -> bool {
        self.trees.iter().any(DecisionTree::has_splits)
    }
}

pub fn train_forest(data: &FeatureSet, params: ForestParams) -> Result<RandomForest, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let p = data.n_features();
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParameter("n_trees must be >= 1".into()));
    }
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(p));
    if mtry == 0 || mtry > p {
        return Err(ModelError::InvalidParameter(format!(
            "mtry must be in 1..={p}, got {mtry}"
        )));
    }
    let (rows, labels) = labelled_rows(data)?;
    let view = TrainView {
        rows: &rows,
        labels: &labels,
        n_features: p,
        n_classes: data.n_classes(),
    };
    let n = rows.len();
    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::fit(&view, &sample, params.tree, Some(mtry), &mut rng)
        })
        .collect();

    let mut importances = vec![0.0; p];
    for tree in &trees {
        for (imp, d) in importances.iter_mut().zip(&tree.impurity_decrease) {
            *imp += d;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(RandomForest {
        trees,
        mtry,
        seed: params.seed,
        params,
        feature_names: data.schema.names().to_vec(),
        class_names: data.class_names.clone(),
        importances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    /// Descending by importance; ties ordered by feature name.
    pub entries: Vec<(String, f64)>,
    /// The forest never split, so every importance is zero.
    pub no_splits: bool,
}

impl ImportanceRanking {
    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }
}

pub fn feature_importance(forest: &RandomForest) -> ImportanceRanking {
    let mut entries: Vec<(String, f64)> = forest
        .feature_names
        .iter()
        .cloned()
        .zip(forest.importances.iter().copied())
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ImportanceRanking {
        entries,
        no_splits: !forest.has_splits(),
    }
}
