//! Classical classifiers: CART tree, random forest, linear SVM and a
//! soft-voting ensemble, plus their persisted form.

mod ensemble;
mod forest;
mod svm;
mod tree;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureSet, FeatureVector};

pub use ensemble::{soft_vote, EnsembleMember, EnsembleModel};
pub use forest::{
    default_mtry, feature_importance, train_forest, tree_rng, ForestParams, ImportanceRanking,
    RandomForest,
};
pub use svm::{fit_scaler, train_svm, LinearSvm, ScalerEntry, SvmParams};
pub use tree::{DecisionTree, Node, TreeParams};

/// Version tag written into every model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("linear SVM needs exactly 2 classes, got {0}")]
    NotBinary(usize),
    #[error("class {0:?} has no training instances")]
    EmptyClass(String),
    #[error("instance {index} has no valid label")]
    Unlabelled { index: usize },
    #[error("feature schema mismatch: {detail}")]
    SchemaMismatch {
        detail: String,
        /// First column name that disagrees, when one exists.
        first_mismatch: Option<String>,
    },
    #[error("class set mismatch: expected {expected:?}, found {found:?}")]
    ClassMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model document: {0}")]
    Format(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub fn schema_mismatch(expected: &[String], found: &[String]) -> Self {
        let first = expected
            .iter()
            .zip(found)
            .find(|(e, f)| e != f)
            .map(|(_, f)| f.clone())
            .or_else(|| {
                // One list is a prefix of the other.
                let longer = if found.len() > expected.len() { found } else { expected };
                longer.get(expected.len().min(found.len())).cloned()
            });
        ModelError::SchemaMismatch {
            detail: format!(
                "expected {} features, found {}; first differing column {:?}",
                expected.len(),
                found.len(),
                first
            ),
            first_mismatch: first,
        }
    }
}

/// Row slices and labels of a fully labelled set.
pub(crate) fn labelled_rows(data: &FeatureSet) -> Result<(Vec<&[f64]>, Vec<usize>), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let k = data.n_classes();
    let mut rows = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (index, v) in data.vectors.iter().enumerate() {
        match v.label {
            Some(l) if l < k => labels.push(l),
            _ => return Err(ModelError::Unlabelled { index }),
        }
        if v.values.len() != data.n_features() {
            return Err(ModelError::schema_mismatch(data.schema.names(), v.names()));
        }
        rows.push(v.values.as_slice());
    }
    Ok((rows, labels))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps a feature vector to class probabilities.
pub trait Classifier: Send + Sync {
    fn feature_names(&self) -> &[String];
    fn class_names(&self) -> &[String];

    /// Probabilities for raw values already known to follow the schema.
    fn predict_proba_values(&self, x: &[f64]) -> Vec<f64>;

    fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        if x.names() != self.feature_names() || x.values.len() != self.feature_names().len() {
            return Err(ModelError::schema_mismatch(self.feature_names(), x.names()));
        }
        Ok(self.predict_proba_values(&x.values))
    }

    fn predict(&self, x: &FeatureVector) -> Result<usize, ModelError> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

/// Standalone tree with its schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeClassifier {
    pub tree: DecisionTree,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// Grows a single tree on the whole set. `mtry` restricts each split to a
/// random feature subset drawn from `rng`.
pub fn train_tree<R: Rng>(
    data: &FeatureSet,
    params: TreeParams,
    rng: &mut R,
    mtry: Option<usize>,
) -> Result<TreeClassifier, ModelError> {
    let (rows, labels) = labelled_rows(data)?;
    if let Some(m) = mtry {
        if m == 0 || m > data.n_features() {
            return Err(ModelError::InvalidParameter(format!(
                "mtry must be in 1..={}, got {m}",
                data.n_features()
            )));
        }
    }
    let view = tree::TrainView {
        rows: &rows,
        labels: &labels,
        n_features: data.n_features(),
        n_classes: data.n_classes(),
    };
    let sample: Vec<usize> = (0..rows.len()).collect();
    Ok(TreeClassifier {
        tree: DecisionTree::fit(&view, &sample, params, mtry, rng),
        feature_names: data.schema.names().to_vec(),
        class_names: data.class_names.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Tree(TreeClassifier),
    Forest(RandomForest),
    Svm(LinearSvm),
    Ensemble(EnsembleModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Tree(_) => "tree",
            TrainedModel::Forest(_) => "forest",
            TrainedModel::Svm(_) => "svm",
            TrainedModel::Ensemble(_) => "ensemble",
        }
    }

    /// The forest whose importances describe this model, if any.
    pub fn forest(&self) -> Option<&RandomForest> {
        match self {
            TrainedModel::Forest(f) => Some(f),
            TrainedModel::Ensemble(e) => e.members.iter().find_map(|m| m.model.forest()),
            _ => None,
        }
    }
}

impl Classifier for TrainedModel {
    fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Tree(t) => &t.feature_names,
            TrainedModel::Forest(f) => &f.feature_names,
            TrainedModel::Svm(s) => &s.feature_names,
            TrainedModel::Ensemble(e) => &e.feature_names,
        }
    }

    fn class_names(&self) -> &[String] {
        match self {
            TrainedModel::Tree(t) => &t.class_names,
            TrainedModel::Forest(f) => &f.class_names,
            TrainedModel::Svm(s) => &s.class_names,
            TrainedModel::Ensemble(e) => &e.class_names,
        }
    }

    fn predict_proba_values(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TrainedModel::Tree(t) => t.tree.predict_proba_values(x).to_vec(),
            TrainedModel::Forest(f) => f.predict_proba_values(x),
            TrainedModel::Svm(s) => s.predict_proba_values(x),
            TrainedModel::Ensemble(e) => e.predict_proba_values(x),
        }
    }
}

macro_rules! classifier_via_model {
    ($ty:ty, $variant:ident) => {
        impl Classifier for $ty {
            fn feature_names(&self) -> &[String] {
                &self.feature_names
            }
            fn class_names(&self) -> &[String] {
                &self.class_names
            }
            fn predict_proba_values(&self, x: &[f64]) -> Vec<f64> {
                <$ty>::predict_proba_values(self, x).to_vec()
            }
        }
        impl From<$ty> for TrainedModel {
            fn from(m: $ty) -> Self {
                TrainedModel::$variant(m)
            }
        }
    };
}

classifier_via_model!(RandomForest, Forest);
classifier_via_model!(LinearSvm, Svm);
classifier_via_model!(EnsembleModel, Ensemble);

impl TreeClassifier {
    pub fn predict_proba_values(&self, x: &[f64]) -> &[f64] {
        self.tree.predict_proba_values(x)
    }
}
classifier_via_model!(TreeClassifier, Tree);

/// Probability vector from any model after a schema check.
pub fn predict_proba(model: &dyn Classifier, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
    model.predict_proba(x)
}

/// Persisted model file: format version, configuration echo and the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub config: BTreeMap<String, String>,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub fn new(model: TrainedModel, config: BTreeMap<String, String>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            config,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
