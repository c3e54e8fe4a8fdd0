//! Flat, versioned pipeline configuration.
//!
//! Loaded from a TOML document (keys below, all optional except `version`),
//! then patched by `key=value` overrides from the command line. Unknown keys
//! are rejected and every value is checked against the owning stage's
//! preconditions before any work starts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anomaly_core::features::MfccConfig;
use anomaly_core::models::{ForestParams, SvmParams, TreeParams};
use anomaly_core::preprocess::{NormalizeMode, PadPolicy, PreprocessConfig, SubtractionParams};
use anomaly_core::synthgen::CorpusSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "ANOMALY_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,

    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,

    pub alpha: f64,
    pub beta: f64,
    pub lead_ms: f64,
    pub mu: f64,
    pub taps: usize,
    pub normalize_mode: NormalizeMode,
    pub normalize_target: f64,
    pub seg_len_s: f64,
    pub pad_policy: PadPolicy,

    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fmax: Option<f64>,
    pub pre_emphasis: f64,

    pub n_trees: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub ensemble_forest_weight: f64,
    pub ensemble_svm_weight: f64,

    pub seed: u64,
    pub test_frac: f64,

    pub n_per_class: usize,
    pub clip_s: f64,
    pub synth_lead_s: f64,
    pub snr_db: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub jitter_hz: f64,
    pub wobble_depth: f64,

    /// Worker threads; 0 lets the runtime decide. Outputs do not depend on
    /// it, so it is never written out.
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let pre = PreprocessConfig::default();
        let mfcc = MfccConfig::default();
        let forest = ForestParams::default();
        let svm = SvmParams::default();
        let corpus = CorpusSpec::default();
        Self {
            version: CONFIG_VERSION,
            sample_rate: anomaly_core::audio_io::DEFAULT_SAMPLE_RATE,
            frame_len: mfcc.frame_len,
            hop: mfcc.hop,
            n_fft: mfcc.n_fft,
            alpha: pre.subtraction.alpha,
            beta: pre.subtraction.beta,
            lead_ms: pre.lead_ms,
            mu: pre.mu,
            taps: pre.taps,
            normalize_mode: pre.normalize_mode,
            normalize_target: pre.normalize_target,
            seg_len_s: pre.seg_len_s,
            pad_policy: pre.pad_policy,
            n_mels: mfcc.n_mels,
            n_coeffs: mfcc.n_coeffs,
            fmin: mfcc.fmin,
            fmax: mfcc.fmax,
            pre_emphasis: mfcc.pre_emphasis,
            n_trees: forest.n_trees,
            mtry: forest.mtry,
            max_depth: forest.tree.max_depth,
            min_samples_leaf: forest.tree.min_samples_leaf,
            svm_lambda: svm.lambda,
            svm_epochs: svm.epochs,
            ensemble_forest_weight: 0.5,
            ensemble_svm_weight: 0.5,
            seed: 42,
            test_frac: 0.3,
            n_per_class: corpus.n_per_class,
            clip_s: corpus.clip_s,
            synth_lead_s: corpus.lead_s,
            snr_db: corpus.snr_db,
            f0_min: corpus.f0_min,
            f0_max: corpus.f0_max,
            jitter_hz: corpus.jitter_hz,
            wobble_depth: corpus.wobble_depth,
            threads: 0,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses an override value as a TOML scalar, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl PipelineConfig {
    /// Reads `path` (if any), applies `overrides` and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e| config_err(format!("config {}: {e}", p.display())))?;
                if !table.contains_key("version") {
                    return Err(config_err(format!(
                        "config {} lacks a version field",
                        p.display()
                    )));
                }
                table
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), parse_value(v));
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.sample_rate == 0 {
            return Err(config_err("sample_rate must be > 0"));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 4 {
            return Err(config_err(format!(
                "n_fft must be a power of two >= 4, got {}",
                self.n_fft
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(config_err(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(config_err(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        let lead_samples = self.lead_ms * self.sample_rate as f64 / 1000.0;
        if !(lead_samples >= self.n_fft as f64) {
            return Err(config_err(format!(
                "lead_ms {} holds no full {}-sample noise frame",
                self.lead_ms, self.n_fft
            )));
        }
        if !(self.mu > 0.0 && self.mu < 2.0) {
            return Err(config_err(format!("mu must be in (0, 2), got {}", self.mu)));
        }
        if self.taps == 0 {
            return Err(config_err("taps must be >= 1"));
        }
        let target_ok = match self.normalize_mode {
            NormalizeMode::Peak => self.normalize_target > 0.0 && self.normalize_target <= 1.0,
            NormalizeMode::Rms => self.normalize_target > 0.0 && self.normalize_target.is_finite(),
        };
        if !target_ok {
            return Err(config_err(format!(
                "normalize_target {} out of range",
                self.normalize_target
            )));
        }
        if !(self.seg_len_s > 0.0) {
            return Err(config_err(format!("seg_len_s must be > 0, got {}", self.seg_len_s)));
        }
        if (self.seg_len_s * self.sample_rate as f64).round() < self.frame_len as f64 {
            return Err(config_err(format!(
                "seg_len_s {} is shorter than one {}-sample feature frame",
                self.seg_len_s, self.frame_len
            )));
        }
        self.mfcc()
            .validate(self.sample_rate)
            .map_err(|e| config_err(e.to_string()))?;
        anomaly_core::features::mel_filterbank(&self.mfcc(), self.sample_rate)
            .map_err(|e| config_err(e.to_string()))?;
        if self.n_trees == 0 {
            return Err(config_err("n_trees must be >= 1"));
        }
        let n_features = 2 * self.n_coeffs + 4;
        if let Some(m) = self.mtry {
            if m == 0 || m > n_features {
                return Err(config_err(format!(
                    "mtry must be in 1..={n_features}, got {m}"
                )));
            }
        }
        if self.min_samples_leaf == 0 {
            return Err(config_err("min_samples_leaf must be >= 1"));
        }
        if !(self.svm_lambda > 0.0) {
            return Err(config_err(format!(
                "svm_lambda must be > 0, got {}",
                self.svm_lambda
            )));
        }
        let (wf, ws) = (self.ensemble_forest_weight, self.ensemble_svm_weight);
        if !(wf >= 0.0 && ws >= 0.0 && wf + ws > 0.0) {
            return Err(config_err(format!(
                "ensemble weights must be >= 0 with a positive sum, got {wf} and {ws}"
            )));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(config_err(format!(
                "test_frac must be in (0, 1), got {}",
                self.test_frac
            )));
        }
        self.corpus()
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            subtraction: SubtractionParams {
                alpha: self.alpha,
                beta: self.beta,
                n_fft: self.n_fft,
            },
            lead_ms: self.lead_ms,
            mu: self.mu,
            taps: self.taps,
            normalize_mode: self.normalize_mode,
            normalize_target: self.normalize_target,
            seg_len_s: self.seg_len_s,
            pad_policy: self.pad_policy,
        }
    }

    pub fn mfcc(&self) -> MfccConfig {
        MfccConfig {
            n_mels: self.n_mels,
            n_coeffs: self.n_coeffs,
            fmin: self.fmin,
            fmax: self.fmax,
            pre_emphasis: self.pre_emphasis,
            frame_len: self.frame_len,
            hop: self.hop,
            n_fft: self.n_fft,
        }
    }

    pub fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            mtry: self.mtry,
            tree: TreeParams {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
            },
            seed: self.seed,
            bootstrap: true,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            lambda: self.svm_lambda,
            epochs: self.svm_epochs,
            seed: self.seed,
        }
    }

    pub fn corpus(&self) -> CorpusSpec {
        CorpusSpec {
            n_per_class: self.n_per_class,
            seed: self.seed,
            sample_rate: self.sample_rate,
            clip_s: self.clip_s,
            lead_s: self.synth_lead_s,
            snr_db: self.snr_db,
            f0_min: self.f0_min,
            f0_max: self.f0_max,
            jitter_hz: self.jitter_hz,
            wobble_depth: self.wobble_depth,
        }
    }

    /// Every parameter as `key -> TOML literal`, sorted by key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let toml::Value::Table(table) = value else {
            unreachable!("config serializes to a table")
        };
        table
            .into_iter()
            .map(|(k, v)| (k, v.to_string()))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
