//! Plots as plain files: waveform and spectrum CSVs, spectrogram PGM.
//!
//! Power is scaled so a full-scale sine centred on a bin reads 0 dB, then
//! floored at `LOG_FLOOR` before taking the log.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anomaly_core::dsp::{self, LOG_FLOOR};
use anomaly_core::AudioBuffer;
use rayon::prelude::*;

use crate::tables::write_csv;
use crate::{runtime, CliError};

/// Bottom of the spectrogram grey scale; 0 dB maps to white.
pub const DB_RANGE: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderKind {
    Waveform,
    Spectrum,
    Spectrogram,
}

impl FromStr for RenderKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "waveform" => Ok(Self::Waveform),
            "spectrum" => Ok(Self::Spectrum),
            "spectrogram" => Ok(Self::Spectrogram),
            other => Err(CliError::Config(format!(
                "unknown render kind {other:?} (waveform, spectrum, spectrogram)"
            ))),
        }
    }
}

/// Per-frame power in dB re full scale, bins `0..=n_fft/2`.
pub fn db_frames(buf: &AudioBuffer, frame_len: usize, hop: usize, n_fft: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut samples = buf.samples.clone();
    if samples.len() < frame_len {
        samples.resize(frame_len, 0.0);
    }
    let padded = AudioBuffer::new(samples, buf.sample_rate);
    let frames = dsp::frame_signal(&padded, frame_len, hop, true).map_err(runtime)?;
    let wsum: f64 = dsp::hann_window(frame_len).iter().sum();
    let scale = 4.0 / (wsum * wsum);
    frames
        .frames()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|f| {
            let p = dsp::power_spectrum(f, n_fft).map_err(runtime)?;
            Ok(p.iter().map(|&x| 10.0 * (x * scale).max(LOG_FLOOR).log10()).collect())
        })
        .collect()
}

/// Rows of `time_s,amplitude`.
pub fn waveform_rows(buf: &AudioBuffer) -> Vec<Vec<String>> {
    let sr = buf.sample_rate as f64;
    buf.samples
        .iter()
        .enumerate()
        .map(|(i, &x)| vec![format!("{:?}", i as f64 / sr), format!("{x:?}")])
        .collect()
}

/// Rows of `freq_hz,power_db`, power averaged over frames before the log.
pub fn spectrum_rows(buf: &AudioBuffer, frame_len: usize, hop: usize, n_fft: usize) -> Result<Vec<Vec<String>>, CliError> {
    let db = db_frames(buf, frame_len, hop, n_fft)?;
    let n = db.len() as f64;
    Ok((0..=n_fft / 2)
        .map(|k| {
            let mean_pow = db.iter().map(|f| 10f64.powf(f[k] / 10.0)).sum::<f64>() / n;
            let level = 10.0 * mean_pow.max(LOG_FLOOR).log10();
            vec![
                format!("{:?}", dsp::bin_frequency(k, buf.sample_rate, n_fft)),
                format!("{level:?}"),
            ]
        })
        .collect())
}

/// Binary PGM (P5): one column per frame, bin 0 on the bottom row,
/// `[-DB_RANGE, 0]` dB mapped linearly onto `0..=255`.
pub fn spectrogram_pgm(buf: &AudioBuffer, frame_len: usize, hop: usize, n_fft: usize) -> Result<Vec<u8>, CliError> {
    let db = db_frames(buf, frame_len, hop, n_fft)?;
    let width = db.len();
    let height = n_fft / 2 + 1;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for row in 0..height {
        let bin = height - 1 - row;
        out.extend(db.iter().map(|f| grey(f[bin])));
    }
    Ok(out)
}

pub fn grey(db: f64) -> u8 {
    let t = ((db + DB_RANGE) / DB_RANGE).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

pub fn render(
    buf: &AudioBuffer,
    kind: RenderKind,
    frame_len: usize,
    hop: usize,
    n_fft: usize,
    out: &Path,
) -> Result<(), CliError> {
    match kind {
        RenderKind::Waveform => write_csv(out, &["time_s", "amplitude"], &waveform_rows(buf)),
        RenderKind::Spectrum => write_csv(
            out,
            &["freq_hz", "power_db"],
            &spectrum_rows(buf, frame_len, hop, n_fft)?,
        ),
        RenderKind::Spectrogram => {
            let bytes = spectrogram_pgm(buf, frame_len, hop, n_fft)?;
            fs::write(out, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", out.display())))
        }
    }
}
