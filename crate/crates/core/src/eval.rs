//! Stratified splitting, confusion matrices, precision/recall metrics,
//! k-fold cross-validation and report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSet;
use crate::models::{Classifier, ImportanceRanking, ModelError};

/// Version tag written into every report document.
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class:?} has {count} instances, need at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unlabelled instance at index {0}")]
    Unlabelled(usize),
    #[error("report document: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn shuffled(indices: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v = indices.to_vec();
    v.shuffle(rng);
    v
}

/// Per class, `round(test_frac * n_c)` instances (kept within `1..n_c`) go to
/// the test side. Both sides keep the original instance order.
pub fn stratified_split(
    data: &FeatureSet,
    test_frac: f64,
    seed: u64,
) -> Result<(FeatureSet, FeatureSet), EvalError> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(EvalError::InvalidParameter(format!(
            "test fraction must be in (0, 1), got {test_frac}"
        )));
    }
    if let Some(i) = data.vectors.iter().position(|v| v.label.is_none()) {
        return Err(EvalError::Unlabelled(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; data.len()];
    for (c, members) in data.indices_by_class().iter().enumerate() {
        let n = members.len();
        if n < 2 {
            return Err(EvalError::ClassTooSmall {
                class: data.class_names[c].clone(),
                count: n,
                needed: 2,
            });
        }
        let take = ((test_frac * n as f64).round() as usize).clamp(1, n - 1);
        for &i in shuffled(members, &mut rng).iter().take(take) {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| is_test[i]);
    Ok((data.subset(&train), data.subset(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    let k = class_names.len();
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= k {
                return Err(EvalError::LabelOutOfRange { label, k });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    /// No predictions of this class; precision reported as 0.
    pub precision_undefined: bool,
    /// No true instances of this class; recall reported as 0.
    pub recall_undefined: bool,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let k = cm.k();
    let trace: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let col: u64 = (0..k).map(|i| cm.counts[i][c]).sum();
            let row: u64 = cm.counts[c].iter().sum();
            ClassMetrics {
                class: cm.class_names[c].clone(),
                precision: if col == 0 { 0.0 } else { tp / col as f64 },
                recall: if row == 0 { 0.0 } else { tp / row as f64 },
                precision_undefined: col == 0,
                recall_undefined: row == 0,
                support: row,
            }
        })
        .collect();
    let macro_precision = per_class.iter().map(|m| m.precision).sum::<f64>() / k as f64;
    let macro_recall = per_class.iter().map(|m| m.recall).sum::<f64>() / k as f64;
    Ok(Metrics {
        accuracy: trace as f64 / total as f64,
        per_class,
        macro_precision,
        macro_recall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_kind: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub importance_top10: Option<ImportanceRanking>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
}

/// Predicts every instance of `data` and tallies the results.
pub fn evaluate_model(
    model: &dyn Classifier,
    data: &FeatureSet,
) -> Result<(ConfusionMatrix, Metrics), EvalError> {
    let mut truth = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for (i, v) in data.vectors.iter().enumerate() {
        truth.push(v.label.ok_or(EvalError::Unlabelled(i))?);
        pred.push(model.predict(v)?);
    }
    let cm = confusion_matrix(&truth, &pred, &data.class_names)?;
    let m = metrics(&cm)?;
    Ok((cm, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// Test-instance indices per fold.
    pub folds: Vec<Vec<usize>>,
    pub reports: Vec<Metrics>,
    pub mean_accuracy: f64,
    /// Population standard deviation across folds.
    pub std_accuracy: f64,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(data: &FeatureSet, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidParameter(format!("need k >= 2, got {k}")));
    }
    if let Some(i) = data.vectors.iter().position(|v| v.label.is_none()) {
        return Err(EvalError::Unlabelled(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for (c, members) in data.indices_by_class().iter().enumerate() {
        if members.len() < k {
            return Err(EvalError::ClassTooSmall {
                class: data.class_names[c].clone(),
                count: members.len(),
                needed: k,
            });
        }
        for (pos, &i) in shuffled(members, &mut rng).iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Runs `trainer` once per fold with that fold held out. The trainer gets
/// the fold index so it can derive a per-fold seed.
pub fn cross_validate<M, F>(
    data: &FeatureSet,
    k: usize,
    seed: u64,
    trainer: F,
) -> Result<CrossValidation, EvalError>
where
    M: Classifier,
    F: Fn(&FeatureSet, usize) -> Result<M, ModelError> + Sync,
{
    let folds = stratified_folds(data, k, seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train_idx: Vec<usize> = (0..data.len())
                .filter(|i| test_idx.binary_search(i).is_err())
                .collect();
            let model = trainer(&data.subset(&train_idx), f)?;
            Ok(evaluate_model(&model, &data.subset(test_idx))?.1)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let accs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / k as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(CrossValidation {
        folds,
        reports,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
    })
}

/// Fixed four-decimal rendering used for every reported metric.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn parse4(s: &str) -> Result<f64, EvalError> {
    s.parse()
        .map_err(|_| EvalError::Format(format!("bad metric value {s:?}")))
}

// On-disk shape: metrics are fixed-point strings so files diff cleanly.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDoc {
    format_version: u32,
    model_kind: String,
    seed: u64,
    accuracy: String,
    macro_precision: String,
    macro_recall: String,
    per_class: Vec<ClassDoc>,
    confusion_matrix: ConfusionDoc,
    importance_top10: Option<ImportanceDoc>,
    config: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    class: String,
    precision: String,
    recall: String,
    precision_undefined: bool,
    recall_undefined: bool,
    support: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfusionDoc {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportanceDoc {
    no_splits: bool,
    features: Vec<(String, String)>,
}

impl EvaluationReport {
    /// The report as it reads back from disk: metrics rounded to 4 places
    /// and importances cut to the top ten.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| parse4(&fmt4(v)).expect("fixed-point renders parse");
        let mut r = self.clone();
        r.metrics.accuracy = q(r.metrics.accuracy);
        r.metrics.macro_precision = q(r.metrics.macro_precision);
        r.metrics.macro_recall = q(r.metrics.macro_recall);
        for c in &mut r.metrics.per_class {
            c.precision = q(c.precision);
            c.recall = q(c.recall);
        }
        if let Some(imp) = &mut r.importance_top10 {
            imp.entries.truncate(10);
            for e in &mut imp.entries {
                e.1 = q(e.1);
            }
        }
        r
    }

    pub fn to_json(&self) -> String {
        let doc = ReportDoc {
            format_version: REPORT_FORMAT_VERSION,
            model_kind: self.model_kind.clone(),
            seed: self.seed,
            accuracy: fmt4(self.metrics.accuracy),
            macro_precision: fmt4(self.metrics.macro_precision),
            macro_recall: fmt4(self.metrics.macro_recall),
            per_class: self
                .metrics
                .per_class
                .iter()
                .map(|c| ClassDoc {
                    class: c.class.clone(),
                    precision: fmt4(c.precision),
                    recall: fmt4(c.recall),
                    precision_undefined: c.precision_undefined,
                    recall_undefined: c.recall_undefined,
                    support: c.support,
                })
                .collect(),
            confusion_matrix: ConfusionDoc {
                class_names: self.confusion.class_names.clone(),
                counts: self.confusion.counts.clone(),
            },
            importance_top10: self.importance_top10.as_ref().map(|r| ImportanceDoc {
                no_splits: r.no_splits,
                features: r.top(10).iter().map(|(n, v)| (n.clone(), fmt4(*v))).collect(),
            }),
            config: self.config.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let doc: ReportDoc =
            serde_json::from_str(text).map_err(|e| EvalError::Format(e.to_string()))?;
        if doc.format_version != REPORT_FORMAT_VERSION {
            return Err(EvalError::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let per_class = doc
            .per_class
            .into_iter()
            .map(|c| {
                Ok(ClassMetrics {
                    class: c.class,
                    precision: parse4(&c.precision)?,
                    recall: parse4(&c.recall)?,
                    precision_undefined: c.precision_undefined,
                    recall_undefined: c.recall_undefined,
                    support: c.support,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let importance_top10 = doc
            .importance_top10
            .map(|imp| {
                Ok::<_, EvalError>(ImportanceRanking {
                    no_splits: imp.no_splits,
                    entries: imp
                        .features
                        .into_iter()
                        .map(|(n, v)| Ok((n, parse4(&v)?)))
                        .collect::<Result<_, EvalError>>()?,
                })
            })
            .transpose()?;
        Ok(Self {
            model_kind: doc.model_kind,
            confusion: ConfusionMatrix {
                counts: doc.confusion_matrix.counts,
                class_names: doc.confusion_matrix.class_names,
            },
            metrics: Metrics {
                accuracy: parse4(&doc.accuracy)?,
                per_class,
                macro_precision: parse4(&doc.macro_precision)?,
                macro_recall: parse4(&doc.macro_recall)?,
            },
            importance_top10,
            config: doc.config,
            seed: doc.seed,
        })
    }
}

pub fn emit_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    fs::write(path, report.to_json()).map_err(|source| EvalError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvaluationReport, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    EvaluationReport::from_json(&text)
}
