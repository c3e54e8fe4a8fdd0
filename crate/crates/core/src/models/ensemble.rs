use serde::{Deserialize, Serialize};

use super::{argmax, Classifier, ModelError, TrainedModel};
use crate::features::FeatureVector;

/// Weighted soft-voting ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<EnsembleMember>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub model: TrainedModel,
    /// Normalized so member weights sum to one.
    pub weight: f64,
}

impl EnsembleModel {
    pub fn new(members: Vec<(TrainedModel, f64)>) -> Result<Self, ModelError> {
        let Some((first, _)) = members.first() else {
            return Err(ModelError::InvalidParameter(
                "ensemble needs at least one member".into(),
            ));
        };
        let feature_names = first.feature_names().to_vec();
        let class_names = first.class_names().to_vec();
        for (m, w) in &members {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "ensemble weight must be finite and >= 0, got {w}"
                )));
            }
            if m.feature_names() != feature_names.as_slice() {
                return Err(ModelError::schema_mismatch(&feature_names, m.feature_names()));
            }
            if m.class_names() != class_names.as_slice() {
                return Err(ModelError::ClassMismatch {
                    expected: class_names.clone(),
                    found: m.class_names().to_vec(),
                });
            }
        }
        let total: f64 = members.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(ModelError::InvalidParameter(
                "ensemble weights sum to zero".into(),
            ));
        }
        Ok(Self {
            members: members
                .into_iter()
                .map(|(model, w)| EnsembleMember {
                    model,
                    weight: w / total,
                })
                .collect(),
            feature_names,
            class_names,
        })
    }

    pub fn predict_proba_values(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.class_names.len()];
        for m in &self.members {
            for (a, p) in acc.iter_mut().zip(m.model.predict_proba_values(x)) {
                *a += m.weight * p;
            }
        }
        acc
    }
}

/// Weighted mean of member probabilities and its argmax (lowest index wins
/// ties).
pub fn soft_vote(
    ensemble: &EnsembleModel,
    x: &FeatureVector,
) -> Result<(usize, Vec<f64>), ModelError> {
    let proba = ensemble.predict_proba(x)?;
    Ok((argmax(&proba), proba))
}
