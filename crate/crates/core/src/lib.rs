//! Spectro-temporal subspace basis features for speech intelligibility
//! assessment and speaker adaptation.
//!
//! The pipeline runs waveform → log mel spectrogram → SVD → fixed-length
//! utterance feature → bottleneck DNN classifier → speaker-averaged
//! embedding → auxiliary-feature (and LHUC) adapted word classifier.

pub mod adapt;
pub mod audio;
pub mod classifier;
pub mod config;
pub mod error;
pub mod features;
pub mod neural;
pub mod parallel;
pub mod seed;
pub mod spectrogram;
pub mod stbf;
pub mod subspace;

pub use config::PipelineConfig;
pub use error::{Error, Result};
