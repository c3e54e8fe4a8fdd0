//! Audio anomaly detection pipeline.
//!
//! Stages, in pipeline order:
//!
//! - [`audio_io`]: WAV in/out and resampling to the working rate
//! - [`dsp`]: framing, Hann window, radix-2 FFT, spectrograms
//! - [`preprocess`]: spectral subtraction, NLMS cancellation, normalization,
//!   segmentation
//! - [`features`]: MFCC, zero-crossing rate and spectral centroid, aggregated
//!   into a 30-value per-segment vector
//! - [`models`]: CART tree, random forest, linear SVM, soft-voting ensemble
//! - [`eval`]: stratified splits, confusion matrix, metrics, reports
//! - [`synthgen`]: deterministic synthetic two-class corpus

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod models;
pub mod preprocess;
pub mod synthgen;

pub use audio_io::AudioBuffer;
pub use features::{FeatureSchema, FeatureSet, FeatureVector};
