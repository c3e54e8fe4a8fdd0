//! WAV ingestion and emission, plus linear resampling to the pipeline rate.
//!
//! Only RIFF/WAVE with PCM16 or IEEE float32 payloads in one or two channels
//! is accepted. Stereo input is downmixed by taking the per-sample channel
//! mean. Output is always PCM16 mono.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Canonical pipeline sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Mono sample sequence tagged with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AudioError {
    AudioError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_wav(&bytes)
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedContainer(
            "file shorter than RIFF header".into(),
        ));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedContainer(format!(
            "expected RIFF tag, found {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedContainer("missing WAVE form type".into()));
    }
    let riff_len = u32_at(bytes, 4) as usize;
    if riff_len + 8 > bytes.len() || riff_len < 4 {
        return Err(AudioError::MalformedContainer(format!(
            "RIFF size {riff_len} inconsistent with file length {}",
            bytes.len()
        )));
    }
    let end = riff_len + 8;

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= end {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > end {
            return Err(AudioError::MalformedContainer(format!(
                "chunk {:?} overruns container",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::MalformedContainer("fmt chunk too small".into()));
                }
                let mut tag = u16_at(bytes, body);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(AudioError::MalformedContainer(
                            "extensible fmt chunk too small".into(),
                        ));
                    }
                    // First two bytes of the sub-format GUID carry the codec tag.
                    tag = u16_at(bytes, body + 24);
                }
                format = Some(Format {
                    tag,
                    channels: u16_at(bytes, body + 2),
                    sample_rate: u32_at(bytes, body + 4),
                    bits: u16_at(bytes, body + 14),
                });
            }
            b"data" => data = Some(&bytes[body..body + size]),
            _ => {}
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1);
    }

    let format =
        format.ok_or_else(|| AudioError::MalformedContainer("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedContainer("missing data chunk".into()))?;

    if format.channels == 0 || format.channels > 2 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{} channels",
            format.channels
        )));
    }
    if format.sample_rate == 0 {
        return Err(AudioError::MalformedContainer("zero sample rate".into()));
    }
    let channels = format.channels as usize;
    let interleaved: Vec<f64> = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        (tag, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::MalformedContainer("non-finite float sample".into()));
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    Ok(AudioBuffer::new(samples, format.sample_rate))
}

/// Quantizes an amplitude to PCM16.
///
/// Amplitudes are clamped to [-1, 1] and scaled by 32768 so that the
/// 1/32768 read scaling inverts the mapping to within one half LSB; +1.0
/// saturates at 32767.
pub fn quantize_pcm16(x: f64) -> i16 {
    let clamped = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a buffer as a PCM16 mono WAV image.
pub fn encode_wav(buffer: &AudioBuffer) -> Vec<u8> {
    let data_len = buffer.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buffer.samples {
        out.extend_from_slice(&quantize_pcm16(s).to_le_bytes());
    }
    out
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    if buffer.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    fs::write(path, encode_wav(buffer)).map_err(|e| io_err(path, e))
}

/// Resamples by linear interpolation between neighbouring input samples.
///
/// Output length is `round(len * target / source)` (at least one sample).
/// Output sample `i` sits at input position `i * source / target`; positions
/// past the last input sample hold the last sample.
pub fn resample_linear(buffer: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidSampleRate(target_rate));
    }
    if target_rate == buffer.sample_rate || buffer.is_empty() {
        return Ok(AudioBuffer {
            samples: buffer.samples.clone(),
            sample_rate: target_rate,
        });
    }
    let src = buffer.sample_rate as u64;
    let dst = target_rate as u64;
    let n = buffer.samples.len() as u64;
    let out_len = ((n * dst + src / 2) / src).max(1) as usize;
    let last = buffer.samples.len() - 1;
    let samples = (0..out_len as u64)
        .map(|i| {
            // Exact integer position avoids drift on long buffers.
            let num = i * src;
            let idx = (num / dst) as usize;
            let frac = (num % dst) as f64 / dst as f64;
            if idx >= last {
                buffer.samples[last]
            } else {
                let a = buffer.samples[idx];
                let b = buffer.samples[idx + 1];
                a + (b - a) * frac
            }
        })
        .collect();
    Ok(AudioBuffer::new(samples, target_rate))
}
