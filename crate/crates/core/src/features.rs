//! MFCC, zero-crossing rate and spectral centroid extraction, aggregated
//! into fixed-schema per-clip feature vectors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioBuffer;
use crate::dsp::{self, DspError, LOG_FLOOR};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid MFCC configuration: {0}")]
    InvalidConfig(String),
    #[error("mel filters {lower} and {upper} collapse onto FFT bin {bin}")]
    DegenerateFilter { lower: usize, upper: usize, bin: usize },
    #[error("frame of {0} samples is too short for a zero-crossing rate")]
    FrameTooShort(usize),
    #[error("signal of {len} samples is shorter than one {frame_len}-sample frame")]
    SignalTooShort { len: usize, frame_len: usize },
    #[error(transparent)]
    Dsp(DspError),
}

impl From<DspError> for FeatureError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::SignalTooShort { len, frame_len } => {
                FeatureError::SignalTooShort { len, frame_len }
            }
            other => FeatureError::Dsp(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub pre_emphasis: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mels: 26,
            n_coeffs: 13,
            fmin: 0.0,
            fmax: None,
            pre_emphasis: 0.97,
            frame_len: dsp::DEFAULT_FRAME_LEN,
            hop: dsp::DEFAULT_HOP,
            n_fft: dsp::DEFAULT_N_FFT,
        }
    }
}

impl MfccConfig {
    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        let nyquist = sample_rate as f64 / 2.0;
        let fmax = self.fmax_for(sample_rate);
        let err = |msg: String| Err(FeatureError::InvalidConfig(msg));
        if self.n_coeffs < 1 || self.n_coeffs > self.n_mels {
            return err(format!(
                "need 1 <= n_coeffs <= n_mels, got {} and {}",
                self.n_coeffs, self.n_mels
            ));
        }
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return err(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin {} fmax {fmax}",
                self.fmin
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return err(format!(
                "pre-emphasis must be in [0, 1), got {}",
                self.pre_emphasis
            ));
        }
        if self.frame_len < 2 || self.hop == 0 || self.frame_len > self.n_fft {
            return err(format!(
                "need frame_len >= 2, hop >= 1 and frame_len <= n_fft, got {}/{}/{}",
                self.frame_len, self.hop, self.n_fft
            ));
        }
        if !self.n_fft.is_power_of_two() {
            return Err(DspError::NFftNotPowerOfTwo(self.n_fft).into());
        }
        Ok(())
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn pre_emphasis(buffer: &AudioBuffer, coeff: f64) -> AudioBuffer {
    let x = &buffer.samples;
    let samples = (0..x.len())
        .map(|n| if n == 0 { x[0] } else { x[n] - coeff * x[n - 1] })
        .collect();
    AudioBuffer::new(samples, buffer.sample_rate)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// FFT bin indices of the `n_mels + 2` mel-spaced edge/center points.
pub fn mel_points_bins(config: &MfccConfig, sample_rate: u32) -> Vec<usize> {
    let lo = hz_to_mel(config.fmin);
    let hi = hz_to_mel(config.fmax_for(sample_rate));
    let count = config.n_mels + 1;
    (0..=count)
        .map(|i| {
            let hz = mel_to_hz(lo + (hi - lo) * i as f64 / count as f64);
            let bin = ((config.n_fft + 1) as f64 * hz / sample_rate as f64).floor() as usize;
            bin.min(config.n_fft / 2)
        })
        .collect()
}

/// Triangular filters on FFT bins, peak 1 at each center, `n_mels` rows of
/// `n_fft / 2 + 1` columns.
pub fn mel_filterbank(config: &MfccConfig, sample_rate: u32) -> Result<Vec<Vec<f64>>, FeatureError> {
    config.validate(sample_rate)?;
    let points = mel_points_bins(config, sample_rate);
    let n_bins = config.n_fft / 2 + 1;
    let mut bank = Vec::with_capacity(config.n_mels);
    for m in 1..=config.n_mels {
        let (left, center, right) = (points[m - 1], points[m], points[m + 1]);
        if left == center || center == right {
            let (lower, upper) = if left == center { (m - 1, m) } else { (m, m + 1) };
            return Err(FeatureError::DegenerateFilter {
                lower,
                upper,
                bin: center,
            });
        }
        let mut row = vec![0.0; n_bins];
        for (k, v) in row.iter_mut().enumerate().take(right + 1).skip(left) {
            *v = if k <= center {
                (k - left) as f64 / (center - left) as f64
            } else {
                (right - k) as f64 / (right - center) as f64
            };
        }
        bank.push(row);
    }
    Ok(bank)
}

/// Orthonormal DCT-II of `input`, truncated to the first `n_out` terms.
pub fn dct2_orthonormal(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        x * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n))
                            .cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Reusable MFCC extractor holding the filterbank for one sample rate.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    config: MfccConfig,
    sample_rate: u32,
    filterbank: Vec<Vec<f64>>,
    /// Cosine basis, `n_coeffs` rows of `n_mels`.
    dct_basis: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        let filterbank = mel_filterbank(&config, sample_rate)?;
        let dct_basis = (0..config.n_mels)
            .map(|i| {
                let mut unit = vec![0.0; config.n_mels];
                unit[i] = 1.0;
                dct2_orthonormal(&unit, config.n_coeffs)
            })
            .collect::<Vec<_>>();
        // Transpose to coefficient-major.
        let dct_basis = (0..config.n_coeffs)
            .map(|k| dct_basis.iter().map(|col| col[k]).collect())
            .collect();
        Ok(Self {
            config,
            sample_rate,
            filterbank,
            dct_basis,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    /// Cepstra from one frame's one-sided power spectrum.
    pub fn cepstrum(&self, power: &[f64]) -> Vec<f64> {
        let log_energy: Vec<f64> = self
            .filterbank
            .iter()
            .map(|row| {
                let e: f64 = row.iter().zip(power).map(|(w, p)| w * p).sum();
                (e + LOG_FLOOR).ln()
            })
            .collect();
        self.dct_basis
            .iter()
            .map(|basis| basis.iter().zip(&log_energy).map(|(b, e)| b * e).sum())
            .collect()
    }

    /// `num_frames x n_coeffs` coefficient matrix.
    pub fn compute(&self, buffer: &AudioBuffer) -> Result<Vec<Vec<f64>>, FeatureError> {
        if buffer.sample_rate != self.sample_rate {
            return Err(FeatureError::InvalidConfig(format!(
                "extractor built for {} Hz, buffer is {} Hz",
                self.sample_rate, buffer.sample_rate
            )));
        }
        let emphasized = pre_emphasis(buffer, self.config.pre_emphasis);
        let frames = dsp::frame_signal(&emphasized, self.config.frame_len, self.config.hop, true)?
            .require_frames(buffer.len())?;
        frames
            .frames()
            .map(|f| Ok(self.cepstrum(&dsp::power_spectrum(f, self.config.n_fft)?)))
            .collect()
    }
}

pub fn mfcc(buffer: &AudioBuffer, config: &MfccConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    MfccExtractor::new(config.clone(), buffer.sample_rate)?.compute(buffer)
}

/// Fraction of adjacent sample pairs whose signs differ. Exact zeros inherit
/// the sign of the previous nonzero sample; leading zeros count as positive.
pub fn zero_crossing_rate(frame: &[f64]) -> Result<f64, FeatureError> {
    if frame.len() < 2 {
        return Err(FeatureError::FrameTooShort(frame.len()));
    }
    let mut positive = true;
    let mut changes = 0usize;
    for (i, &x) in frame.iter().enumerate() {
        let sign = if x > 0.0 {
            true
        } else if x < 0.0 {
            false
        } else {
            positive
        };
        if i > 0 && sign != positive {
            changes += 1;
        }
        positive = sign;
    }
    Ok(changes as f64 / (frame.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub hz: f64,
    /// Spectrum carried no energy.
    pub silent: bool,
}

pub fn spectral_centroid(power_bins: &[f64], sample_rate: u32, n_fft: usize) -> Centroid {
    debug_assert_eq!(power_bins.len(), n_fft / 2 + 1);
    let total: f64 = power_bins.iter().sum();
    if total <= 0.0 {
        return Centroid {
            hz: 0.0,
            silent: true,
        };
    }
    let weighted: f64 = power_bins
        .iter()
        .enumerate()
        .map(|(k, p)| dsp::bin_frequency(k, sample_rate, n_fft) * p)
        .sum();
    Centroid {
        hz: weighted / total,
        silent: false,
    }
}

/// Shared, immutable ordered list of feature names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema(Arc<[String]>);

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Self {
        Self(names.into())
    }

    /// `MFCC_mean_1..n`, `MFCC_std_1..n`, `ZCR_mean`, `ZCR_std`,
    /// `Centroid_mean`, `Centroid_std`.
    pub fn clip_schema(n_coeffs: usize) -> Self {
        let mut names = Vec::with_capacity(2 * n_coeffs + 4);
        names.extend((1..=n_coeffs).map(|i| format!("MFCC_mean_{i}")));
        names.extend((1..=n_coeffs).map(|i| format!("MFCC_std_{i}")));
        for n in ["ZCR_mean", "ZCR_std", "Centroid_mean", "Centroid_std"] {
            names.push(n.to_string());
        }
        Self::new(names)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub clip_id: String,
    pub label: Option<usize>,
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn names(&self) -> &[String] {
        self.schema.names()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub schema: FeatureSchema,
    pub class_names: Vec<String>,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn new(schema: FeatureSchema, class_names: Vec<String>) -> Self {
        Self {
            schema,
            class_names,
            vectors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.vectors.iter().map(|v| v.label).collect()
    }

    /// Builds a labelled set from raw rows, generating sequential clip ids.
    pub fn from_rows(
        schema: FeatureSchema,
        class_names: Vec<String>,
        rows: Vec<(Vec<f64>, usize)>,
    ) -> Self {
        let vectors = rows
            .into_iter()
            .enumerate()
            .map(|(i, (values, label))| FeatureVector {
                clip_id: format!("row{i:05}"),
                label: Some(label),
                schema: schema.clone(),
                values,
            })
            .collect();
        Self {
            schema,
            class_names,
            vectors,
        }
    }

    /// Copy holding only the vectors at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            class_names: self.class_names.clone(),
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
        }
    }

    /// Instance indices grouped by label, in class order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_names.len()];
        for (i, v) in self.vectors.iter().enumerate() {
            if let Some(l) = v.label {
                if l < groups.len() {
                    groups[l].push(i);
                }
            }
        }
        groups
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clip-level extractor sharing one filterbank and schema across clips.
#[derive(Debug, Clone)]
pub struct ClipFeatureExtractor {
    mfcc: MfccExtractor,
    schema: FeatureSchema,
}

impl ClipFeatureExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        let schema = FeatureSchema::clip_schema(config.n_coeffs);
        Ok(Self {
            mfcc: MfccExtractor::new(config, sample_rate)?,
            schema,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn extract(
        &self,
        segment: &AudioBuffer,
        clip_id: &str,
        label: Option<usize>,
    ) -> Result<FeatureVector, FeatureError> {
        let cfg = self.mfcc.config();
        let cepstra = self.mfcc.compute(segment)?;
        let raw = dsp::frame_signal(segment, cfg.frame_len, cfg.hop, false)?;
        let windowed = dsp::frame_signal(segment, cfg.frame_len, cfg.hop, true)?;
        let zcr = raw
            .frames()
            .map(zero_crossing_rate)
            .collect::<Result<Vec<_>, _>>()?;
        let centroid = windowed
            .frames()
            .map(|f| {
                let p = dsp::power_spectrum(f, cfg.n_fft)?;
                Ok(spectral_centroid(&p, segment.sample_rate, cfg.n_fft).hz)
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;

        let n_coeffs = cfg.n_coeffs;
        let mut means = Vec::with_capacity(n_coeffs);
        let mut stds = Vec::with_capacity(n_coeffs);
        for c in 0..n_coeffs {
            let column: Vec<f64> = cepstra.iter().map(|row| row[c]).collect();
            let (m, s) = mean_and_std(&column);
            means.push(m);
            stds.push(s);
        }
        let mut values = means;
        values.extend(stds);
        let (zm, zs) = mean_and_std(&zcr);
        let (cm, cs) = mean_and_std(&centroid);
        values.extend([zm, zs, cm, cs]);
        Ok(FeatureVector {
            clip_id: clip_id.to_string(),
            label,
            schema: self.schema.clone(),
            values,
        })
    }
}

pub fn extract_clip_features(
    segment: &AudioBuffer,
    config: &MfccConfig,
) -> Result<FeatureVector, FeatureError> {
    ClipFeatureExtractor::new(config.clone(), segment.sample_rate)?.extract(segment, "", None)
}
