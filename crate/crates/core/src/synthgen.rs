//! Deterministic two-class corpus of harmonic-tone speech proxies.
//!
//! "normal" clips are steady three-harmonic tones. "anomalous" clips share the
//! f0 range but add a reflecting random walk on f0, a slow amplitude wobble,
//! 6 dB more background noise and a -6 dB/octave tilt across harmonics. Every
//! clip opens with a noise-only lead so the noise profile stage has material
//! to estimate from. These are signal proxies, not recorded or synthesized
//! speech.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{self, AudioBuffer, AudioError};

pub const NORMAL_LABEL: &str = "normal";
pub const ANOMALOUS_LABEL: &str = "anomalous";

/// Peak level every clip is scaled to before quantization.
pub const CLIP_PEAK: f64 = 0.9;

const HARMONIC_GAINS: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_per_class: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub clip_s: f64,
    /// Noise-only opening of each clip.
    pub lead_s: f64,
    /// Tone-to-noise ratio of normal clips; anomalous clips get 6 dB less.
    pub snr_db: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Standard deviation of the f0 random walk accumulated over 10 ms.
    pub jitter_hz: f64,
    /// Relative depth of the anomalous amplitude wobble.
    pub wobble_depth: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            seed: 42,
            sample_rate: audio_io::DEFAULT_SAMPLE_RATE,
            clip_s: 1.0,
            lead_s: 0.25,
            snr_db: 20.0,
            f0_min: 110.0,
            f0_max: 220.0,
            jitter_hz: 6.0,
            wobble_depth: 0.5,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_per_class < 1 {
            return err(format!("n_per_class must be >= 1, got {}", self.n_per_class));
        }
        if !(self.clip_s > 0.0) {
            return err(format!("clip_s must be > 0, got {}", self.clip_s));
        }
        if !(self.lead_s >= 0.0 && self.lead_s < self.clip_s) {
            return err(format!(
                "lead_s must be in [0, clip_s), got {} for clip_s {}",
                self.lead_s, self.clip_s
            ));
        }
        if self.sample_rate == 0 {
            return err("sample_rate must be > 0".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && 3.0 * self.f0_max < nyquist) {
            return err(format!(
                "need 0 < f0_min < f0_max and 3 * f0_max < {nyquist}, got {}..{}",
                self.f0_min, self.f0_max
            ));
        }
        if !(self.jitter_hz >= 0.0) || !(0.0..1.0).contains(&self.wobble_depth) {
            return err("jitter_hz must be >= 0 and wobble_depth in [0, 1)".into());
        }
        if !self.snr_db.is_finite() {
            return err("snr_db must be finite".into());
        }
        Ok(())
    }

    pub fn total_clips(&self) -> usize {
        2 * self.n_per_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipClass {
    Normal,
    Anomalous,
}

impl ClipClass {
    pub fn label(self) -> &'static str {
        match self {
            ClipClass::Normal => NORMAL_LABEL,
            ClipClass::Anomalous => ANOMALOUS_LABEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: String,
}

/// Class and per-class index of global clip `index` (normal clips first).
fn clip_slot(spec: &CorpusSpec, index: usize) -> (ClipClass, usize) {
    if index < spec.n_per_class {
        (ClipClass::Normal, index)
    } else {
        (ClipClass::Anomalous, index - spec.n_per_class)
    }
}

pub fn clip_id(class: ClipClass, i: usize) -> String {
    format!("{}_{i:04}", class.label())
}

fn reflect(mut f: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    for _ in 0..4 {
        if f < lo {
            f = 2.0 * lo - f;
        } else if f > hi {
            f = 2.0 * hi - f;
        } else {
            return f;
        }
    }
    lo + (f - lo).rem_euclid(span)
}

/// Synthesizes global clip `index`; the RNG stream depends only on
/// `(seed, index)`.
pub fn generate_clip(spec: &CorpusSpec, index: usize) -> AudioBuffer {
    let (class, _) = clip_slot(spec, index);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);

    let sr = spec.sample_rate as f64;
    let total = ((spec.clip_s * sr).round() as usize).max(1);
    let lead = ((spec.lead_s * sr).round() as usize).min(total.saturating_sub(1));
    let anomalous = class == ClipClass::Anomalous;

    let mut f0 = rng.random_range(spec.f0_min..=spec.f0_max);
    let wobble_hz = rng.random_range(2.0..=6.0);
    let wobble_phase = rng.random_range(0.0..2.0 * PI);
    let step_sigma = spec.jitter_hz / (sr / 100.0).sqrt();
    let jitter = Normal::new(0.0, step_sigma.max(0.0)).expect("finite sigma");

    let mut tone = vec![0.0; total];
    let mut phase = 0.0f64;
    for (n, out) in tone.iter_mut().enumerate().skip(lead) {
        if anomalous && step_sigma > 0.0 {
            f0 = reflect(f0 + jitter.sample(&mut rng), spec.f0_min, spec.f0_max);
        }
        phase = (phase + 2.0 * PI * f0 / sr).rem_euclid(2.0 * PI);
        let env = if anomalous {
            let t = (n - lead) as f64 / sr;
            1.0 + spec.wobble_depth * (2.0 * PI * wobble_hz * t + wobble_phase).sin()
        } else {
            1.0
        };
        *out = env
            * HARMONIC_GAINS
                .iter()
                .enumerate()
                .map(|(h, g)| {
                    let order = (h + 1) as f64;
                    let tilt = if anomalous { 1.0 / order } else { 1.0 };
                    g * tilt * (order * phase).sin()
                })
                .sum::<f64>();
    }

    let voiced = &tone[lead..];
    let tone_rms = (voiced.iter().map(|v| v * v).sum::<f64>() / voiced.len() as f64).sqrt();
    let snr = if anomalous { spec.snr_db - 6.0 } else { spec.snr_db };
    let noise_sigma = tone_rms * 10f64.powf(-snr / 20.0);
    let noise = Normal::new(0.0, noise_sigma).expect("finite sigma");
    let mut samples: Vec<f64> = tone.iter().map(|t| t + noise.sample(&mut rng)).collect();

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = CLIP_PEAK / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes every clip as `<clip_id>.wav` plus `manifest.csv` into `out_dir`.
/// Manifest rows are sorted by clip id.
pub fn generate_corpus(
    spec: &CorpusSpec,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>, SynthError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| SynthError::IoFailure {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut entries = (0..spec.total_clips())
        .into_par_iter()
        .map(|index| {
            let (class, i) = clip_slot(spec, index);
            let id = clip_id(class, i);
            let file = format!("{id}.wav");
            audio_io::write_wav(&generate_clip(spec, index), out_dir.join(&file))?;
            Ok(ManifestEntry {
                clip_id: id,
                path: file,
                label: class.label().to_string(),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    entries.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let mut manifest = String::from("clip_id,path,label\n");
    for e in &entries {
        manifest.push_str(&format!("{},{},{}\n", e.clip_id, e.path, e.label));
    }
    let path = out_dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|source| SynthError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    Ok(entries)
}
