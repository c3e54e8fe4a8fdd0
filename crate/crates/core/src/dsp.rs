//! Framing, windowing, radix-2 FFT and spectrogram primitives.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::audio_io::AudioBuffer;

pub const DEFAULT_FRAME_LEN: usize = 400;
pub const DEFAULT_HOP: usize = 160;
pub const DEFAULT_N_FFT: usize = 512;

/// Floor added to spectral power before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("transform length {0} is not a power of two")]
    NFftNotPowerOfTwo(usize),
    #[error("frame of {frame_len} samples does not fit transform length {n_fft}")]
    FrameTooLong { frame_len: usize, n_fft: usize },
    #[error("signal of {len} samples is shorter than one {frame_len}-sample frame")]
    SignalTooShort { len: usize, frame_len: usize },
    #[error("invalid framing: frame_len {frame_len}, hop {hop}")]
    InvalidFraming { frame_len: usize, hop: usize },
}

/// Periodic Hann window, `w[k] = 0.5 (1 - cos(2 pi k / n))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    assert!(n >= 2, "window length must be at least 2");
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
        .collect()
}

fn check_pow2(n: usize) -> Result<(), DspError> {
    if n == 0 || !n.is_power_of_two() {
        Err(DspError::NFftNotPowerOfTwo(n))
    } else {
        Ok(())
    }
}

/// In-place iterative Cooley-Tukey transform. `inverse` flips the twiddle
/// sign and applies the 1/n scale.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // Twiddles computed directly rather than by recurrence to
                // keep rounding error independent of k.
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward transform of a real frame, zero-padded to `n_fft`.
pub fn dft(frame: &[f64], n_fft: usize) -> Result<Vec<Complex64>, DspError> {
    check_pow2(n_fft)?;
    if frame.len() > n_fft {
        return Err(DspError::FrameTooLong {
            frame_len: frame.len(),
            n_fft,
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (slot, &x) in buf.iter_mut().zip(frame) {
        slot.re = x;
    }
    fft_in_place(&mut buf, false);
    Ok(buf)
}

/// Inverse transform; returns complex samples (imaginary part ~0 for
/// conjugate-symmetric spectra).
pub fn idft(spectrum: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    check_pow2(spectrum.len())?;
    let mut buf = spectrum.to_vec();
    fft_in_place(&mut buf, true);
    Ok(buf)
}

/// Frames stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    data: Vec<f64>,
    pub num_frames: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameMatrix {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len.max(1)).take(self.num_frames)
    }

    pub fn is_empty(&self) -> bool {
        self.num_frames == 0
    }

    /// Errors when the matrix holds no frames.
    pub fn require_frames(self, signal_len: usize) -> Result<Self, DspError> {
        if self.num_frames == 0 {
            Err(DspError::SignalTooShort {
                len: signal_len,
                frame_len: self.frame_len,
            })
        } else {
            Ok(self)
        }
    }
}

/// Number of full frames of `frame_len` at stride `hop` in `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        1 + (len - frame_len) / hop
    }
}

/// Slices a buffer into frames; the trailing partial frame is discarded.
pub fn frame_signal(
    buffer: &AudioBuffer,
    frame_len: usize,
    hop: usize,
    window: bool,
) -> Result<FrameMatrix, DspError> {
    if frame_len < 2 || hop == 0 {
        return Err(DspError::InvalidFraming { frame_len, hop });
    }
    let num_frames = frame_count(buffer.len(), frame_len, hop);
    let win = window.then(|| hann_window(frame_len));
    let mut data = Vec::with_capacity(num_frames * frame_len);
    for i in 0..num_frames {
        let chunk = &buffer.samples[i * hop..i * hop + frame_len];
        match &win {
            Some(w) => data.extend(chunk.iter().zip(w).map(|(x, w)| x * w)),
            None => data.extend_from_slice(chunk),
        }
    }
    Ok(FrameMatrix {
        data,
        num_frames,
        frame_len,
        hop,
        sample_rate: buffer.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralScale {
    Magnitude,
    Power,
    /// `10 log10(power + 1e-10)`.
    LogPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// One row per frame, `n_fft / 2 + 1` bins each.
    pub bins: Vec<Vec<f64>>,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub scale: SpectralScale,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.bins.len()
    }

    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin_frequency(bin, self.sample_rate, self.n_fft)
    }
}

pub fn bin_frequency(bin: usize, sample_rate: u32, n_fft: usize) -> f64 {
    bin as f64 * sample_rate as f64 / n_fft as f64
}

/// One-sided power spectrum `|X[k]|^2`, `k = 0..=n_fft/2`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>, DspError> {
    let spec = dft(frame, n_fft)?;
    Ok(spec[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect())
}

pub fn power_spectrogram(
    frames: &FrameMatrix,
    n_fft: usize,
    scale: SpectralScale,
) -> Result<Spectrogram, DspError> {
    check_pow2(n_fft)?;
    if frames.frame_len > n_fft {
        return Err(DspError::FrameTooLong {
            frame_len: frames.frame_len,
            n_fft,
        });
    }
    let rows: Vec<Vec<f64>> = frames
        .frames()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|frame| {
            let power = power_spectrum(frame, n_fft)?;
            Ok(match scale {
                SpectralScale::Power => power,
                SpectralScale::Magnitude => power.into_iter().map(f64::sqrt).collect(),
                SpectralScale::LogPower => power
                    .into_iter()
                    .map(|p| 10.0 * (p + LOG_FLOOR).log10())
                    .collect(),
            })
        })
        .collect::<Result<_, DspError>>()?;
    Ok(Spectrogram {
        bins: rows,
        n_fft,
        hop: frames.hop,
        sample_rate: frames.sample_rate,
        scale,
    })
}
