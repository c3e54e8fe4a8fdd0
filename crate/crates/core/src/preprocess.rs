//! Noise reduction, amplitude normalization and fixed-length segmentation.
//!
//! Noise reduction is hybrid: magnitude spectral subtraction against a noise
//! profile estimated from the leading part of the clip, followed by NLMS
//! cancellation when a reference channel is available. Spectral subtraction
//! analyses with a periodic Hann window of `n_fft` samples at hop `n_fft / 2`;
//! those windows sum to one, so overlap-add without a synthesis window
//! reconstructs the input exactly when no bin is modified.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioBuffer;
use crate::dsp::{self, DspError};

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_LEAD_MS: f64 = 250.0;
pub const DEFAULT_MU: f64 = 0.5;
pub const DEFAULT_TAPS: usize = 32;
pub const DEFAULT_SEG_LEN_S: f64 = 1.0;
pub const NLMS_EPS: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("leading {lead_samples} samples hold no full {frame_len}-sample frame for a noise profile")]
    TooShortForProfile {
        lead_samples: usize,
        frame_len: usize,
    },
    #[error("noise profile ({profile_n_fft}-point @ {profile_rate} Hz) does not match {n_fft}-point @ {rate} Hz")]
    ProfileMismatch {
        profile_n_fft: usize,
        profile_rate: u32,
        n_fft: usize,
        rate: u32,
    },
    #[error("primary has {primary} samples but reference has {reference}")]
    LengthMismatch { primary: usize, reference: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Mean magnitude spectrum of noise-only frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub mean_magnitude: Vec<f64>,
    pub n_fft: usize,
    pub sample_rate: u32,
    pub source_frames: usize,
}

fn analysis_frame(samples: &[f64], window: &[f64], n_fft: usize) -> Vec<Complex64> {
    let windowed: Vec<f64> = samples.iter().zip(window).map(|(x, w)| x * w).collect();
    dsp::dft(&windowed, n_fft).expect("n_fft validated by caller")
}

fn validate_n_fft(n_fft: usize) -> Result<(), PreprocessError> {
    if n_fft < 4 || !n_fft.is_power_of_two() {
        return Err(DspError::NFftNotPowerOfTwo(n_fft).into());
    }
    Ok(())
}

/// Averages Hann-windowed magnitude spectra over every full frame in the
/// first `lead_ms` milliseconds.
pub fn estimate_noise_profile(
    buffer: &AudioBuffer,
    lead_ms: f64,
    n_fft: usize,
) -> Result<NoiseProfile, PreprocessError> {
    validate_n_fft(n_fft)?;
    if !(lead_ms > 0.0) {
        return Err(PreprocessError::InvalidParameter(format!(
            "lead_ms must be positive, got {lead_ms}"
        )));
    }
    let hop = n_fft / 2;
    let lead_samples =
        ((lead_ms * buffer.sample_rate as f64 / 1000.0).floor() as usize).min(buffer.len());
    let frames = dsp::frame_count(lead_samples, n_fft, hop);
    if frames == 0 {
        return Err(PreprocessError::TooShortForProfile {
            lead_samples,
            frame_len: n_fft,
        });
    }
    let window = dsp::hann_window(n_fft);
    let mut acc = vec![0.0; n_fft / 2 + 1];
    for i in 0..frames {
        let spec = analysis_frame(&buffer.samples[i * hop..i * hop + n_fft], &window, n_fft);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += c.norm();
        }
    }
    for a in &mut acc {
        *a /= frames as f64;
    }
    Ok(NoiseProfile {
        mean_magnitude: acc,
        n_fft,
        sample_rate: buffer.sample_rate,
        source_frames: frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtractionParams {
    pub alpha: f64,
    pub beta: f64,
    pub n_fft: usize,
}

impl Default for SubtractionParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            n_fft: dsp::DEFAULT_N_FFT,
        }
    }
}

/// `max(M - alpha N, beta M)` per bin.
pub fn subtract_magnitudes(magnitude: &[f64], noise: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    magnitude
        .iter()
        .zip(noise)
        .map(|(&m, &n)| (m - alpha * n).max(beta * m))
        .collect()
}

pub fn spectral_subtract(
    buffer: &AudioBuffer,
    profile: &NoiseProfile,
    params: SubtractionParams,
) -> Result<AudioBuffer, PreprocessError> {
    spectral_subtract_observed(buffer, profile, params, |_, _| {})
}

/// Like [`spectral_subtract`], calling `observe(before, after)` with the
/// one-sided magnitude spectra of every frame.
pub fn spectral_subtract_observed(
    buffer: &AudioBuffer,
    profile: &NoiseProfile,
    params: SubtractionParams,
    mut observe: impl FnMut(&[f64], &[f64]),
) -> Result<AudioBuffer, PreprocessError> {
    let SubtractionParams { alpha, beta, n_fft } = params;
    validate_n_fft(n_fft)?;
    if profile.n_fft != n_fft
        || profile.sample_rate != buffer.sample_rate
        || profile.mean_magnitude.len() != n_fft / 2 + 1
    {
        return Err(PreprocessError::ProfileMismatch {
            profile_n_fft: profile.n_fft,
            profile_rate: profile.sample_rate,
            n_fft,
            rate: buffer.sample_rate,
        });
    }
    if !(alpha >= 0.0) || !(0.0..=1.0).contains(&beta) {
        return Err(PreprocessError::InvalidParameter(format!(
            "alpha must be >= 0 and beta in [0, 1], got alpha {alpha}, beta {beta}"
        )));
    }
    let len = buffer.len();
    if len == 0 {
        return Ok(buffer.clone());
    }
    let hop = n_fft / 2;
    // Leading hop of zeros plus a zero tail so every input sample sits under
    // exactly two full frames.
    let frames = (hop + len - 1) / hop + 1;
    let padded_len = (frames + 1) * hop;
    let mut padded = vec![0.0; padded_len];
    padded[hop..hop + len].copy_from_slice(&buffer.samples);

    let window = dsp::hann_window(n_fft);
    let mut out = vec![0.0; padded_len];
    for f in 0..frames {
        let start = f * hop;
        let mut spec = analysis_frame(&padded[start..start + n_fft], &window, n_fft);
        let before: Vec<f64> = spec[..=hop].iter().map(|c| c.norm()).collect();
        let after = subtract_magnitudes(&before, &profile.mean_magnitude, alpha, beta);
        observe(&before, &after);
        for k in 0..=hop {
            let gain = if before[k] > 0.0 { after[k] / before[k] } else { 0.0 };
            spec[k] *= gain;
            if k != 0 && k != hop {
                spec[n_fft - k] *= gain;
            }
        }
        let frame = dsp::idft(&spec)?;
        for (o, c) in out[start..start + n_fft].iter_mut().zip(&frame) {
            *o += c.re;
        }
    }
    Ok(AudioBuffer::new(
        out[hop..hop + len].to_vec(),
        buffer.sample_rate,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveFilterState {
    pub weights: Vec<f64>,
    pub mu: f64,
    pub taps: usize,
    pub eps: f64,
}

/// Normalized LMS noise canceller; returns the error signal as the cleaned
/// output together with the final filter state.
pub fn nlms_cancel(
    primary: &AudioBuffer,
    reference: &AudioBuffer,
    mu: f64,
    taps: usize,
) -> Result<(AudioBuffer, AdaptiveFilterState), PreprocessError> {
    if primary.len() != reference.len() {
        return Err(PreprocessError::LengthMismatch {
            primary: primary.len(),
            reference: reference.len(),
        });
    }
    if primary.sample_rate != reference.sample_rate {
        return Err(PreprocessError::InvalidParameter(format!(
            "primary rate {} differs from reference rate {}",
            primary.sample_rate, reference.sample_rate
        )));
    }
    if !(mu > 0.0 && mu < 2.0) || taps == 0 {
        return Err(PreprocessError::InvalidParameter(format!(
            "need 0 < mu < 2 and taps >= 1, got mu {mu}, taps {taps}"
        )));
    }
    let mut weights = vec![0.0; taps];
    // window[j] = r[n - j]
    let mut window = vec![0.0; taps];
    let mut cleaned = Vec::with_capacity(primary.len());
    for (&d, &r) in primary.samples.iter().zip(&reference.samples) {
        window.rotate_right(1);
        window[0] = r;
        let y: f64 = weights.iter().zip(&window).map(|(w, x)| w * x).sum();
        let e = d - y;
        let energy: f64 = window.iter().map(|x| x * x).sum();
        let step = mu / (NLMS_EPS + energy) * e;
        for (w, x) in weights.iter_mut().zip(&window) {
            *w += step * x;
        }
        cleaned.push(e);
    }
    Ok((
        AudioBuffer::new(cleaned, primary.sample_rate),
        AdaptiveFilterState {
            weights,
            mu,
            taps,
            eps: NLMS_EPS,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    Peak,
    Rms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub buffer: AudioBuffer,
    /// Input was all zeros and was returned unchanged.
    pub silent: bool,
}

pub fn normalize(
    buffer: &AudioBuffer,
    mode: NormalizeMode,
    target: f64,
) -> Result<Normalized, PreprocessError> {
    let valid = match mode {
        NormalizeMode::Peak => target > 0.0 && target <= 1.0,
        NormalizeMode::Rms => target > 0.0 && target.is_finite(),
    };
    if !valid {
        return Err(PreprocessError::InvalidParameter(format!(
            "normalization target {target} out of range for {mode:?}"
        )));
    }
    let peak = buffer.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Ok(Normalized {
            buffer: buffer.clone(),
            silent: true,
        });
    }
    let samples = match mode {
        NormalizeMode::Peak => {
            // Within rounding of the target already: leave the bits alone so
            // repeated normalization is a fixed point.
            if ((peak - target) / target).abs() <= 4.0 * f64::EPSILON {
                buffer.samples.clone()
            } else {
                let gain = target / peak;
                buffer.samples.iter().map(|s| s * gain).collect()
            }
        }
        NormalizeMode::Rms => {
            let rms = (buffer.samples.iter().map(|s| s * s).sum::<f64>()
                / buffer.len() as f64)
                .sqrt();
            let gain = target / rms;
            buffer
                .samples
                .iter()
                .map(|s| (s * gain).clamp(-1.0, 1.0))
                .collect()
        }
    };
    Ok(Normalized {
        buffer: AudioBuffer::new(samples, buffer.sample_rate),
        silent: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PadPolicy {
    ZeroPadLast,
    DropLast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<AudioBuffer>,
    pub seg_len: usize,
    pub pad_policy: PadPolicy,
    /// Zeros appended to the final segment.
    pub padding: usize,
}

impl SegmentSet {
    /// Concatenates the segments and strips the trailing padding.
    pub fn reassemble(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .segments
            .iter()
            .flat_map(|s| s.samples.iter().copied())
            .collect();
        out.truncate(out.len() - self.padding);
        out
    }
}

/// Segment length in samples for a duration, at least one sample.
pub fn segment_samples(seg_len_s: f64, sample_rate: u32) -> usize {
    ((seg_len_s * sample_rate as f64).round() as usize).max(1)
}

pub fn segment(
    buffer: &AudioBuffer,
    seg_len_s: f64,
    pad_policy: PadPolicy,
) -> Result<SegmentSet, PreprocessError> {
    if !(seg_len_s > 0.0) || !seg_len_s.is_finite() {
        return Err(PreprocessError::InvalidParameter(format!(
            "segment length must be positive, got {seg_len_s}"
        )));
    }
    let seg_len = segment_samples(seg_len_s, buffer.sample_rate);
    let mut segments = Vec::with_capacity(buffer.len() / seg_len + 1);
    let mut padding = 0;
    for chunk in buffer.samples.chunks(seg_len) {
        if chunk.len() == seg_len {
            segments.push(AudioBuffer::new(chunk.to_vec(), buffer.sample_rate));
        } else if pad_policy == PadPolicy::ZeroPadLast {
            let mut s = chunk.to_vec();
            padding = seg_len - chunk.len();
            s.resize(seg_len, 0.0);
            segments.push(AudioBuffer::new(s, buffer.sample_rate));
        }
    }
    if segments.is_empty() && buffer.is_empty() && pad_policy == PadPolicy::ZeroPadLast {
        segments.push(AudioBuffer::new(vec![0.0; seg_len], buffer.sample_rate));
        padding = seg_len;
    }
    Ok(SegmentSet {
        segments,
        seg_len,
        pad_policy,
        padding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub subtraction: SubtractionParams,
    pub lead_ms: f64,
    pub mu: f64,
    pub taps: usize,
    pub normalize_mode: NormalizeMode,
    pub normalize_target: f64,
    pub seg_len_s: f64,
    pub pad_policy: PadPolicy,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            subtraction: SubtractionParams::default(),
            lead_ms: DEFAULT_LEAD_MS,
            mu: DEFAULT_MU,
            taps: DEFAULT_TAPS,
            normalize_mode: NormalizeMode::Peak,
            normalize_target: 0.99,
            seg_len_s: DEFAULT_SEG_LEN_S,
            pad_policy: PadPolicy::ZeroPadLast,
        }
    }
}

/// Full clip conditioning: spectral subtraction, NLMS when `reference` is
/// given, normalization, then segmentation.
pub fn preprocess_clip(
    buffer: &AudioBuffer,
    reference: Option<&AudioBuffer>,
    config: &PreprocessConfig,
) -> Result<SegmentSet, PreprocessError> {
    let profile = estimate_noise_profile(buffer, config.lead_ms, config.subtraction.n_fft)?;
    let mut cleaned = spectral_subtract(buffer, &profile, config.subtraction)?;
    if let Some(reference) = reference {
        cleaned = nlms_cancel(&cleaned, reference, config.mu, config.taps)?.0;
    }
    let normalized = normalize(&cleaned, config.normalize_mode, config.normalize_target)?;
    segment(&normalized.buffer, config.seg_len_s, config.pad_policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    fn snr_db(clean: &[f64], observed: &[f64]) -> f64 {
        let signal: f64 = clean.iter().map(|s| s * s).sum();
        let noise: f64 = clean
            .iter()
            .zip(observed)
            .map(|(s, o)| (o - s) * (o - s))
            .sum();
        10.0 * (signal / noise).log10()
    }

    #[test]
    fn silent_lead_gives_zero_profile() {
        let buf = AudioBuffer::new(vec![0.0; 8000], 16000);
        let p = estimate_noise_profile(&buf, 250.0, 512).unwrap();
        assert_eq!(p.source_frames, 14);
        assert!(p.mean_magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn short_lead_is_rejected() {
        let buf = AudioBuffer::new(vec![0.1; 8000], 16000);
        // 20 ms = 320 samples < one 512-sample frame.
        assert_eq!(
            estimate_noise_profile(&buf, 20.0, 512),
            Err(PreprocessError::TooShortForProfile {
                lead_samples: 320,
                frame_len: 512
            })
        );
    }

    #[test]
    fn profile_averaging_reduces_variance() {
        // Variance over seeds of one bin: 10-frame profile vs 1-frame profile.
        let n_fft = 64;
        let bin = 9;
        let mut single = Vec::new();
        let mut multi = Vec::new();
        for seed in 0..200 {
            let noise = white(64 * 6, 0.1, seed);
            let buf = AudioBuffer::new(noise, 16000);
            // 64 samples = one frame; 352 samples = 10 frames at hop 32.
            let one = estimate_noise_profile(&buf, 4.0, n_fft).unwrap();
            let ten = estimate_noise_profile(&buf, 22.0, n_fft).unwrap();
            assert_eq!(one.source_frames, 1);
            assert_eq!(ten.source_frames, 10);
            single.push(one.mean_magnitude[bin]);
            multi.push(ten.mean_magnitude[bin]);
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(var(&multi) < 0.5 * var(&single));
        assert!((mean(&multi) - mean(&single)).abs() < 0.15 * mean(&single));
    }

    #[test]
    fn alpha_zero_reconstructs_input() {
        let x = white(5000, 0.3, 3);
        let buf = AudioBuffer::new(x.clone(), 16000);
        let profile = estimate_noise_profile(&buf, 250.0, 512).unwrap();
        let params = SubtractionParams {
            alpha: 0.0,
            beta: 0.01,
            n_fft: 512,
        };
        let out = spectral_subtract(&buf, &profile, params).unwrap();
        assert_eq!(out.len(), x.len());
        let err = out
            .samples
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "reconstruction error {err}");
    }

    #[test]
    fn silence_stays_silent() {
        let buf = AudioBuffer::new(vec![0.0; 3000], 16000);
        let profile = NoiseProfile {
            mean_magnitude: vec![1.0; 257],
            n_fft: 512,
            sample_rate: 16000,
            source_frames: 1,
        };
        let out = spectral_subtract(&buf, &profile, SubtractionParams::default()).unwrap();
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn profile_mismatch() {
        let buf = AudioBuffer::new(vec![0.0; 3000], 16000);
        let profile = NoiseProfile {
            mean_magnitude: vec![0.0; 129],
            n_fft: 256,
            sample_rate: 16000,
            source_frames: 1,
        };
        assert!(matches!(
            spectral_subtract(&buf, &profile, SubtractionParams::default()),
            Err(PreprocessError::ProfileMismatch { .. })
        ));
    }

    #[test]
    fn subtraction_improves_snr_of_noisy_tone() {
        let rate = 16000;
        let lead = 4000;
        let body = 16000;
        let amp = 0.3;
        let noise = white(lead + body, amp / 2f64.sqrt(), 11);
        let mut clean = vec![0.0; lead + body];
        for (n, c) in clean[lead..].iter_mut().enumerate() {
            *c = amp * (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / rate as f64).sin();
        }
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
        let buf = AudioBuffer::new(noisy.clone(), rate);
        let profile = estimate_noise_profile(&buf, 250.0, 512).unwrap();
        let out = spectral_subtract(&buf, &profile, SubtractionParams::default()).unwrap();
        let before = snr_db(&clean[lead..], &noisy[lead..]);
        let after = snr_db(&clean[lead..], &out.samples[lead..]);
        assert!(before.abs() < 0.5, "input SNR {before}");
        assert!(after - before >= 5.0, "SNR {before} -> {after}");
    }

    #[test]
    fn nlms_zero_reference_is_identity() {
        let primary = AudioBuffer::new(white(500, 0.5, 1), 16000);
        let reference = AudioBuffer::new(vec![0.0; 500], 16000);
        let (cleaned, state) = nlms_cancel(&primary, &reference, 0.5, 8).unwrap();
        assert_eq!(cleaned, primary);
        assert!(state.weights.iter().all(|&w| w == 0.0));
        assert_eq!(state.eps, 1e-8);
    }

    #[test]
    fn nlms_tiny_step_is_near_identity() {
        let primary = AudioBuffer::new(white(500, 0.5, 1), 16000);
        let reference = AudioBuffer::new(white(500, 0.5, 2), 16000);
        let (cleaned, _) = nlms_cancel(&primary, &reference, 1e-12, 8).unwrap();
        for (a, b) in cleaned.samples.iter().zip(&primary.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn nlms_identifies_fir() {
        let true_taps = [0.6, -0.3, 0.2, 0.1, -0.05, 0.04, -0.02, 0.01];
        let r = white(5000, 1.0, 5);
        let d: Vec<f64> = (0..r.len())
            .map(|n| {
                true_taps
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j <= n)
                    .map(|(j, h)| h * r[n - j])
                    .sum()
            })
            .collect();
        let (_, state) = nlms_cancel(
            &AudioBuffer::new(d, 16000),
            &AudioBuffer::new(r, 16000),
            0.5,
            8,
        )
        .unwrap();
        let num: f64 = state
            .weights
            .iter()
            .zip(&true_taps)
            .map(|(w, h)| (w - h).powi(2))
            .sum();
        let den: f64 = true_taps.iter().map(|h| h * h).sum();
        assert!(10.0 * (num / den).log10() < -20.0);
    }

    #[test]
    fn nlms_errors() {
        let a = AudioBuffer::new(vec![0.0; 10], 16000);
        let b = AudioBuffer::new(vec![0.0; 9], 16000);
        assert_eq!(
            nlms_cancel(&a, &b, 0.5, 4).unwrap_err(),
            PreprocessError::LengthMismatch {
                primary: 10,
                reference: 9
            }
        );
        assert!(nlms_cancel(&a, &a, 2.0, 4).is_err());
        assert!(nlms_cancel(&a, &a, 0.5, 0).is_err());
    }

    #[test]
    fn normalize_cases() {
        let buf = AudioBuffer::new(vec![0.1, -0.2], 16000);
        let out = normalize(&buf, NormalizeMode::Peak, 0.99).unwrap();
        assert!(!out.silent);
        assert!((out.buffer.samples[0] - 0.495).abs() < 1e-15);
        assert!((out.buffer.samples[1] + 0.99).abs() < 1e-15);

        let zeros = AudioBuffer::new(vec![0.0; 4], 16000);
        let out = normalize(&zeros, NormalizeMode::Rms, 0.1).unwrap();
        assert!(out.silent);
        assert_eq!(out.buffer, zeros);

        let c = AudioBuffer::new(vec![0.5; 100], 16000);
        let out = normalize(&c, NormalizeMode::Rms, 0.1).unwrap();
        assert!(out.buffer.samples.iter().all(|&s| (s - 0.1).abs() < 1e-15));

        assert!(normalize(&c, NormalizeMode::Peak, 1.5).is_err());
        assert!(normalize(&c, NormalizeMode::Rms, 0.0).is_err());
    }

    #[test]
    fn rms_mode_clips() {
        let buf = AudioBuffer::new(vec![0.01, 0.01, 0.01, 1.0], 16000);
        let out = normalize(&buf, NormalizeMode::Rms, 0.9).unwrap();
        assert!(out.buffer.samples.iter().all(|s| s.abs() <= 1.0));
        assert_eq!(out.buffer.samples[3], 1.0);
    }

    #[test]
    fn segment_cases() {
        let buf = AudioBuffer::new(vec![0.5; 40000], 16000);
        let set = segment(&buf, 1.0, PadPolicy::ZeroPadLast).unwrap();
        assert_eq!(set.segments.len(), 3);
        assert_eq!(set.padding, 8000);
        assert!(set.segments[2].samples[8000..].iter().all(|&s| s == 0.0));

        let buf = AudioBuffer::new(vec![0.5; 32000], 16000);
        for policy in [PadPolicy::ZeroPadLast, PadPolicy::DropLast] {
            let set = segment(&buf, 1.0, policy).unwrap();
            assert_eq!(set.segments.len(), 2);
            assert_eq!(set.padding, 0);
        }

        let short = AudioBuffer::new(vec![0.5; 6400], 16000);
        assert!(segment(&short, 1.0, PadPolicy::DropLast)
            .unwrap()
            .segments
            .is_empty());
        let set = segment(&short, 1.0, PadPolicy::ZeroPadLast).unwrap();
        assert_eq!(set.segments.len(), 1);
        assert_eq!(set.segments[0].len(), 16000);

        assert!(segment(&short, 0.0, PadPolicy::DropLast).is_err());
    }

    #[test]
    fn preprocess_clip_chains_stages() {
        let mut x = white(24000, 0.01, 9);
        for (n, v) in x.iter_mut().enumerate().skip(4000) {
            *v += 0.4 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin();
        }
        let buf = AudioBuffer::new(x, 16000);
        let set = preprocess_clip(&buf, None, &PreprocessConfig::default()).unwrap();
        assert_eq!(set.segments.len(), 2);
        let peak = set
            .segments
            .iter()
            .flat_map(|s| &s.samples)
            .fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak - 0.99).abs() < 1e-12);

        let reference = AudioBuffer::new(white(24000, 0.01, 10), 16000);
        let with_ref = preprocess_clip(&buf, Some(&reference), &PreprocessConfig::default()).unwrap();
        assert_eq!(with_ref.segments.len(), 2);
        assert_ne!(with_ref, set);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn subtraction_bounds_hold_per_frame(
            seed in 0u64..1000,
            alpha in 0.0f64..4.0,
            beta in 0.0f64..1.0,
            gain in 0.0f64..2.0,
        ) {
            let noise = white(3000, 0.2, seed);
            let buf = AudioBuffer::new(noise.iter().map(|v| v * gain).collect(), 16000);
            let profile = estimate_noise_profile(&AudioBuffer::new(noise, 16000), 100.0, 256).unwrap();
            let params = SubtractionParams { alpha, beta, n_fft: 256 };
            let mut ok = true;
            let out = spectral_subtract_observed(&buf, &profile, params, |before, after| {
                for (m, m2) in before.iter().zip(after) {
                    ok &= *m2 >= beta * m && *m2 <= *m;
                }
            }).unwrap();
            prop_assert!(ok);
            prop_assert!(out.is_finite());
            prop_assert_eq!(out.len(), buf.len());
        }

        #[test]
        fn peak_normalize_is_idempotent(
            samples in proptest::collection::vec(-1.0f64..1.0, 1..200),
            target in 0.01f64..=1.0,
        ) {
            let buf = AudioBuffer::new(samples, 16000);
            let once = normalize(&buf, NormalizeMode::Peak, target).unwrap();
            let twice = normalize(&once.buffer, NormalizeMode::Peak, target).unwrap();
            prop_assert_eq!(&once.buffer, &twice.buffer);
        }

        #[test]
        fn segments_reassemble_exactly(
            samples in proptest::collection::vec(-1.0f64..1.0, 0..500),
            seg in 1u32..120,
        ) {
            let buf = AudioBuffer::new(samples.clone(), 1000);
            let set = segment(&buf, seg as f64 / 1000.0, PadPolicy::ZeroPadLast).unwrap();
            prop_assert!(set.segments.iter().all(|s| s.len() == set.seg_len));
            prop_assert_eq!(set.segments.len() * set.seg_len - set.padding, samples.len());
            prop_assert_eq!(set.reassemble(), samples);
        }
    }
}
