//! Audio ingestion: WAV I/O, speed perturbation, energy-based silence
//! stripping and the corpus manifest.

mod manifest;
mod perturb;
mod vad;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use manifest::{read_manifest, write_manifest, ManifestRow};
pub use perturb::speed_perturb;
pub use vad::{strip_silence, DEFAULT_ENERGY_FLOOR_DB, DEFAULT_FRAME_MS};
pub use wav::{load_wav, read_wav, write_wav, write_wav_to, SampleFormat};

/// A mono signal with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Waveform {
            samples,
            sample_rate,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Scales the signal down so the peak magnitude is at most 1. Signals that
    /// already fit are returned untouched.
    pub fn normalized(mut self) -> Self {
        let peak = self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if peak > 1.0 {
            for s in &mut self.samples {
                *s /= peak;
            }
        }
        self
    }
}

/// Intelligibility group of a speaker: four dysarthric severity bands plus
/// control speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intelligibility {
    VL,
    L,
    M,
    H,
    CTL,
}

impl Intelligibility {
    pub const ALL: [Intelligibility; 5] = [
        Intelligibility::VL,
        Intelligibility::L,
        Intelligibility::M,
        Intelligibility::H,
        Intelligibility::CTL,
    ];

    pub const DYSARTHRIC: [Intelligibility; 4] = [
        Intelligibility::VL,
        Intelligibility::L,
        Intelligibility::M,
        Intelligibility::H,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_dysarthric(self) -> bool {
        self != Intelligibility::CTL
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intelligibility::VL => "VL",
            Intelligibility::L => "L",
            Intelligibility::M => "M",
            Intelligibility::H => "H",
            Intelligibility::CTL => "CTL",
        }
    }
}

impl fmt::Display for Intelligibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intelligibility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "VL" => Ok(Intelligibility::VL),
            "L" => Ok(Intelligibility::L),
            "M" => Ok(Intelligibility::M),
            "H" => Ok(Intelligibility::H),
            "CTL" => Ok(Intelligibility::CTL),
            other => Err(Error::Manifest(format!(
                "unknown intelligibility group `{other}` (expected VL, L, M, H or CTL)"
            ))),
        }
    }
}

/// Who said what, and how intelligibly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub speaker_id: String,
    pub block_id: String,
    pub word_id: String,
    pub intelligibility: Intelligibility,
}
