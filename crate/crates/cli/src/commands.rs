//! One function per subcommand. Outputs depend only on inputs and config,
//! never on the worker-thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anomaly_core::audio_io::{self, AudioBuffer};
use anomaly_core::eval::{self, EvaluationReport};
use anomaly_core::features::ClipFeatureExtractor;
use anomaly_core::models::{
    feature_importance, train_forest, train_svm, Classifier, EnsembleModel, ModelDocument,
    ModelError, TrainedModel,
};
use anomaly_core::preprocess::preprocess_clip;
use anomaly_core::synthgen::{generate_corpus, ManifestEntry};
use anomaly_core::FeatureSet;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::render::{self, RenderKind};
use crate::tables::{self, ManifestRow};
use crate::{runtime, CliError};

pub const SEGMENT_MANIFEST: &str = "segments.csv";

/// Runs `f` on a pool of `threads` workers (0: the global pool).
pub fn with_threads<T: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(runtime)?
        .install(f)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Reads a clip and brings it to the configured rate.
fn load_audio(path: &Path, sample_rate: u32) -> Result<AudioBuffer, CliError> {
    if !path.is_file() {
        return Err(runtime(format!("input file not found: {}", path.display())));
    }
    let buf = audio_io::read_wav(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if buf.sample_rate == sample_rate {
        Ok(buf)
    } else {
        audio_io::resample_linear(&buf, sample_rate)
            .map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Io { .. } => runtime(e),
        ModelError::SchemaMismatch { .. } | ModelError::Format(_) => CliError::Config(e.to_string()),
        other => runtime(other),
    }
}

fn eval_err(e: eval::EvalError) -> CliError {
    match e {
        eval::EvalError::Model(m) => model_err(m),
        eval::EvalError::IoFailure { .. } => runtime(e),
        other => CliError::Config(other.to_string()),
    }
}

pub fn synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    generate_corpus(&cfg.corpus(), out_dir).map_err(runtime)
}

/// Conditions every clip of `manifest` and writes one WAV per segment plus
/// a segment manifest (`clip_id,path,label,source_clip,segment`) into
/// `out_dir`. Segment ids are `<clip_id>_seg<NNN>`.
pub fn preprocess(cfg: &PipelineConfig, manifest: &Path, out_dir: &Path) -> Result<PathBuf, CliError> {
    let mut rows = tables::read_manifest(manifest)?;
    rows.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    if let Some(w) = rows.windows(2).find(|w| w[0].clip_id == w[1].clip_id) {
        return Err(CliError::Config(format!(
            "{}: duplicate clip_id {}",
            manifest.display(),
            w[0].clip_id
        )));
    }
    create_dir(out_dir)?;
    let pre = cfg.preprocess();
    let per_clip = rows
        .par_iter()
        .map(|row: &ManifestRow| {
            let input = tables::resolve(manifest, &row.path);
            let buf = load_audio(&input, cfg.sample_rate)?;
            let reference = match &row.reference {
                Some(r) => Some(load_audio(&tables::resolve(manifest, r), cfg.sample_rate)?),
                None => None,
            };
            let set = preprocess_clip(&buf, reference.as_ref(), &pre)
                .map_err(|e| runtime(format!("clip {}: {e}", row.clip_id)))?;
            let mut out = Vec::with_capacity(set.segments.len());
            for (i, seg) in set.segments.iter().enumerate() {
                let id = format!("{}_seg{i:03}", row.clip_id);
                let file = format!("{id}.wav");
                audio_io::write_wav(seg, out_dir.join(&file)).map_err(runtime)?;
                out.push(vec![id, file, row.label.clone(), row.clip_id.clone(), i.to_string()]);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let path = out_dir.join(SEGMENT_MANIFEST);
    let rows: Vec<Vec<String>> = per_clip.into_iter().flatten().collect();
    tables::write_csv(
        &path,
        &["clip_id", "path", "label", "source_clip", "segment"],
        &rows,
    )?;
    Ok(path)
}

/// Extracts clip-level features for every entry of `manifest`.
pub fn extract_set(cfg: &PipelineConfig, manifest: &Path) -> Result<FeatureSet, CliError> {
    let rows = tables::read_manifest(manifest)?;
    let extractor = ClipFeatureExtractor::new(cfg.mfcc(), cfg.sample_rate)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let class_names = tables::class_names_of(rows.iter().map(|r| r.label.as_str()));
    let vectors = rows
        .par_iter()
        .map(|row| {
            let buf = load_audio(&tables::resolve(manifest, &row.path), cfg.sample_rate)?;
            let label = class_names.iter().position(|c| *c == row.label);
            extractor
                .extract(&buf, &row.clip_id, label)
                .map_err(|e| runtime(format!("clip {}: {e}", row.clip_id)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut set = FeatureSet::new(extractor.schema().clone(), class_names);
    set.vectors = vectors;
    Ok(set)
}

pub fn extract(cfg: &PipelineConfig, manifest: &Path, out: &Path) -> Result<FeatureSet, CliError> {
    let set = extract_set(cfg, manifest)?;
    tables::write_features(out, &set)?;
    Ok(set)
}

/// Stratified train/test split of a feature table.
pub fn split(cfg: &PipelineConfig, features: &Path, train_out: &Path, test_out: &Path) -> Result<(), CliError> {
    let data = tables::read_features(features, None)?;
    let (train, test) = eval::stratified_split(&data, cfg.test_frac, cfg.seed).map_err(eval_err)?;
    tables::write_features(train_out, &train)?;
    tables::write_features(test_out, &test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Forest,
    Svm,
    Ensemble,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Svm, ModelKind::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Svm => "svm",
            ModelKind::Ensemble => "ensemble",
        }
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown model kind {s:?} (forest, svm, ensemble)")))
    }
}

/// Trains the requested models and writes `<kind>.json` for each into
/// `out_dir`. The ensemble soft-votes a forest and an SVM trained with the
/// same parameters as the standalone ones.
pub fn train(
    cfg: &PipelineConfig,
    features: &Path,
    out_dir: &Path,
    kinds: &[ModelKind],
) -> Result<Vec<PathBuf>, CliError> {
    let data = tables::read_features(features, None)?;
    let need_forest = kinds.iter().any(|k| *k != ModelKind::Svm);
    let need_svm = kinds.iter().any(|k| *k != ModelKind::Forest);
    let (forest, svm) = rayon::join(
        || need_forest.then(|| train_forest(&data, cfg.forest())).transpose(),
        || need_svm.then(|| train_svm(&data, cfg.svm())).transpose(),
    );
    let (forest, svm) = (forest.map_err(model_err)?, svm.map_err(model_err)?);
    create_dir(out_dir)?;
    let echo = cfg.echo();
    let mut written = Vec::new();
    for &kind in kinds {
        let model = match kind {
            ModelKind::Forest => TrainedModel::Forest(forest.clone().expect("trained")),
            ModelKind::Svm => TrainedModel::Svm(svm.clone().expect("trained")),
            ModelKind::Ensemble => TrainedModel::Ensemble(
                EnsembleModel::new(vec![
                    (TrainedModel::Forest(forest.clone().expect("trained")), cfg.ensemble_forest_weight),
                    (TrainedModel::Svm(svm.clone().expect("trained")), cfg.ensemble_svm_weight),
                ])
                .map_err(model_err)?,
            ),
        };
        let path = out_dir.join(format!("{}.json", kind.name()));
        ModelDocument::new(model, echo.clone())
            .save(&path)
            .map_err(model_err)?;
        written.push(path);
    }
    Ok(written)
}

/// Path of the confusion-matrix CSV written next to a report.
pub fn confusion_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}_confusion.csv"))
}

/// Scores a saved model on a feature table. The table's columns must match
/// the model's feature schema exactly, in order.
pub fn evaluate(
    cfg: &PipelineConfig,
    model_path: &Path,
    features: &Path,
    report_path: &Path,
) -> Result<EvaluationReport, CliError> {
    if !model_path.is_file() {
        return Err(runtime(format!("model file not found: {}", model_path.display())));
    }
    let doc = ModelDocument::load(model_path).map_err(model_err)?;
    let model = &doc.model;
    let found = tables::read_feature_header(features)?;
    let expected = model.feature_names();
    if found != expected {
        let first = match ModelError::schema_mismatch(expected, &found) {
            ModelError::SchemaMismatch { first_mismatch, .. } => first_mismatch.unwrap_or_default(),
            _ => String::new(),
        };
        return Err(CliError::Config(format!(
            "feature schema mismatch in {}: first mismatched column `{first}`",
            features.display()
        )));
    }
    let data = tables::read_features(features, Some(model.class_names()))?;
    let (confusion, metrics) = eval::evaluate_model(model, &data).map_err(eval_err)?;
    let report = EvaluationReport {
        model_kind: model.kind().to_string(),
        confusion,
        metrics,
        importance_top10: model.forest().map(feature_importance),
        config: cfg.echo(),
        seed: cfg.seed,
    };
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    eval::emit_report(&report, report_path).map_err(eval_err)?;
    write_file(&confusion_path(report_path), report.confusion.to_csv())?;
    Ok(report)
}

/// Layout of a pipeline run directory.
#[derive(Debug, Clone)]
pub struct PipelinePaths {
    pub root: PathBuf,
}

impl PipelinePaths {
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn segments(&self) -> PathBuf {
        self.root.join("segments")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features.csv")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train.csv")
    }
    pub fn test(&self) -> PathBuf {
        self.root.join("test.csv")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn model(&self, kind: ModelKind) -> PathBuf {
        self.models().join(format!("{}.json", kind.name()))
    }
    pub fn report(&self, kind: ModelKind) -> PathBuf {
        self.root.join("reports").join(format!("{}.json", kind.name()))
    }
}

/// synth, preprocess, extract, split, train, evaluate, in that order.
pub fn pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<EvaluationReport>, CliError> {
    let p = PipelinePaths { root: out_dir.to_path_buf() };
    create_dir(out_dir)?;
    write_file(&out_dir.join("config.toml"), cfg.to_toml())?;
    synth(cfg, &p.corpus())?;
    let segments = preprocess(cfg, &p.corpus().join("manifest.csv"), &p.segments())?;
    extract(cfg, &segments, &p.features())?;
    split(cfg, &p.features(), &p.train(), &p.test())?;
    train(cfg, &p.train(), &p.models(), &ModelKind::ALL)?;
    ModelKind::ALL
        .iter()
        .map(|&k| evaluate(cfg, &p.model(k), &p.test(), &p.report(k)))
        .collect()
}

pub fn render(cfg: &PipelineConfig, input: &Path, kind: RenderKind, out: &Path) -> Result<(), CliError> {
    if !input.is_file() {
        return Err(runtime(format!("input file not found: {}", input.display())));
    }
    let buf = audio_io::read_wav(input).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
    render::render(&buf, kind, cfg.frame_len, cfg.hop, cfg.n_fft, out)
}
