//! Binary linear SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss (Pegasos step schedule).
//!
//! Features are standardized with train-set statistics. The bias is handled
//! as the weight of a constant unit feature and is regularized with the rest.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{labelled_rows, ModelError};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            epochs: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerEntry {
    pub mean: f64,
    /// Population std; 1 for zero-variance features.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Vec<ScalerEntry>,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

pub fn fit_scaler(rows: &[&[f64]], n_features: usize) -> Vec<ScalerEntry> {
    let n = rows.len() as f64;
    (0..n_features)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            ScalerEntry {
                mean,
                std: if std > 0.0 { std } else { 1.0 },
            }
        })
        .collect()
}

fn standardize(x: &[f64], scaler: &[ScalerEntry]) -> Vec<f64> {
    x.iter()
        .zip(scaler)
        .map(|(v, s)| (v - s.mean) / s.std)
        .collect()
}

impl LinearSvm {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let z = standardize(x, &self.scaler);
        self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// `[1 - s, s]` with `s = 1 / (1 + exp(-d))`.
    pub fn predict_proba_values(&self, x: &[f64]) -> Vec<f64> {
        let p1 = 1.0 / (1.0 + (-self.decision_value(x)).exp());
        vec![1.0 - p1, p1]
    }

    /// Regularized hinge objective on a labelled set (labels in {0, 1}).
    pub fn objective(&self, data: &FeatureSet) -> Result<f64, ModelError> {
        let (rows, labels) = labelled_rows(data)?;
        let hinge: f64 = rows
            .iter()
            .zip(&labels)
            .map(|(x, &l)| {
                let y = if l == 1 { 1.0 } else { -1.0 };
                (1.0 - y * self.decision_value(x)).max(0.0)
            })
            .sum::<f64>()
            / rows.len() as f64;
        let norm: f64 = self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias;
        Ok(0.5 * self.lambda * norm + hinge)
    }
}

pub fn train_svm(data: &FeatureSet, params: SvmParams) -> Result<LinearSvm, ModelError> {
    if data.n_classes() != 2 {
        return Err(ModelError::NotBinary(data.n_classes()));
    }
    if !(params.lambda > 0.0) || !params.lambda.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "lambda must be positive, got {}",
            params.lambda
        )));
    }
    let (rows, labels) = labelled_rows(data)?;
    for (c, name) in data.class_names.iter().enumerate() {
        if !labels.contains(&c) {
            return Err(ModelError::EmptyClass(name.clone()));
        }
    }
    let p = data.n_features();
    let scaler = fit_scaler(&rows, p);
    let z: Vec<Vec<f64>> = rows.iter().map(|r| standardize(r, &scaler)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();

    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * (w.iter().zip(&z[i]).map(|(a, v)| a * v).sum::<f64>() + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|a| *a *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (a, v) in w.iter_mut().zip(&z[i]) {
                    *a += eta * y[i] * v;
                }
                b += eta * y[i];
            }
            let norm = (w.iter().map(|a| a * a).sum::<f64>() + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|a| *a *= s);
                b *= s;
            }
        }
    }
    Ok(LinearSvm {
        weights: w,
        bias: b,
        scaler,
        lambda,
        epochs: params.epochs,
        seed: params.seed,
        feature_names: data.schema.names().to_vec(),
        class_names: data.class_names.clone(),
    })
}
