use serde::{Deserialize, Serialize};

use super::{svd, temporal_window_stats};
use crate::audio::UtteranceMeta;
use crate::error::{Error, Result};
use crate::spectrogram::MelSpectrogram;

/// Basis selection and temporal windowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceConfig {
    /// Number of leading spectral (left singular) bases kept.
    pub spectral_bases: usize,
    /// Number of leading temporal (right singular) bases kept.
    pub temporal_bases: usize,
    /// Sliding window length over each temporal basis.
    pub window: usize,
    pub stride: usize,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        SubspaceConfig {
            spectral_bases: 2,
            temporal_bases: 5,
            window: 25,
            stride: 1,
        }
    }
}

impl SubspaceConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("spectral_bases", self.spectral_bases),
            ("temporal_bases", self.temporal_bases),
            ("window", self.window),
            ("stride", self.stride),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn spectral_len(&self, channels: usize) -> usize {
        self.spectral_bases * channels
    }

    pub fn temporal_len(&self) -> usize {
        2 * self.window * self.temporal_bases
    }

    pub fn feature_len(&self, channels: usize) -> usize {
        self.spectral_len(channels) + self.temporal_len()
    }
}

/// Which parts of an utterance feature feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputConfig {
    SB,
    TB,
    #[serde(rename = "SB+TB")]
    SBTB,
}

impl InputConfig {
    pub const ALL: [InputConfig; 3] = [InputConfig::SB, InputConfig::TB, InputConfig::SBTB];

    pub fn as_str(self) -> &'static str {
        match self {
            InputConfig::SB => "SB",
            InputConfig::TB => "TB",
            InputConfig::SBTB => "SB+TB",
        }
    }

    pub fn input_dim(self, cfg: &SubspaceConfig, channels: usize) -> usize {
        match self {
            InputConfig::SB => cfg.spectral_len(channels),
            InputConfig::TB => cfg.temporal_len(),
            InputConfig::SBTB => cfg.feature_len(channels),
        }
    }
}

impl std::str::FromStr for InputConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SB" => Ok(InputConfig::SB),
            "TB" => Ok(InputConfig::TB),
            "SB+TB" | "SBTB" | "SB-TB" => Ok(InputConfig::SBTB),
            other => Err(Error::config("input", format!("unknown input configuration `{other}`"))),
        }
    }
}

/// Fixed-length per-utterance vector: flattened leading spectral bases
/// followed by windowed mean/std of the leading temporal bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceFeature {
    pub spectral: Vec<f64>,
    pub temporal: Vec<f64>,
    pub config: SubspaceConfig,
    pub meta: UtteranceMeta,
    /// Set when the utterance had fewer frames than requested temporal
    /// bases and zero vectors were substituted.
    pub padded: bool,
}

impl UtteranceFeature {
    pub fn len(&self) -> usize {
        self.spectral.len() + self.temporal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.spectral.clone();
        v.extend_from_slice(&self.temporal);
        v
    }

    pub fn input(&self, which: InputConfig) -> Vec<f64> {
        match which {
            InputConfig::SB => self.spectral.clone(),
            InputConfig::TB => self.temporal.clone(),
            InputConfig::SBTB => self.to_vec(),
        }
    }

    /// Rebuilds a feature from a flat vector as produced by [`to_vec`].
    ///
    /// [`to_vec`]: UtteranceFeature::to_vec
    pub fn from_flat(
        flat: &[f64],
        config: SubspaceConfig,
        channels: usize,
        meta: UtteranceMeta,
    ) -> Result<Self> {
        let split = config.spectral_len(channels);
        if flat.len() != config.feature_len(channels) {
            return Err(Error::Shape(format!(
                "feature has {} values, configuration expects {}",
                flat.len(),
                config.feature_len(channels)
            )));
        }
        Ok(UtteranceFeature {
            spectral: flat[..split].to_vec(),
            temporal: flat[split..].to_vec(),
            config,
            meta,
            padded: false,
        })
    }
}

/// Decomposes one utterance's mel spectrogram and assembles its feature.
pub fn utterance_feature(
    s: &MelSpectrogram,
    cfg: &SubspaceConfig,
    meta: UtteranceMeta,
) -> Result<UtteranceFeature> {
    cfg.validate()?;
    let (c, t) = s.values.dim();
    if cfg.spectral_bases > c {
        return Err(Error::param(
            "spectral_bases",
            format!("{} exceeds the {c} mel channels", cfg.spectral_bases),
        ));
    }
    let dec = svd(s.values.view())?;
    let (spectral_basis, temporal_basis) =
        super::truncate(&dec, cfg.spectral_bases, cfg.temporal_bases.min(t))?;

    let mut spectral = Vec::with_capacity(cfg.spectral_len(c));
    for col in spectral_basis.columns() {
        spectral.extend(col.iter());
    }

    let mut temporal = Vec::with_capacity(cfg.temporal_len());
    for row in temporal_basis.rows() {
        let v: Vec<f64> = row.to_vec();
        let (mean, std) = temporal_window_stats(&v, cfg.window, cfg.stride);
        temporal.extend(mean);
        temporal.extend(std);
    }
    let padded = cfg.temporal_bases > t;
    if padded {
        log::warn!(
            "utterance {}/{} has {t} frames, fewer than {} temporal bases; padding with zeros",
            meta.speaker_id,
            meta.word_id,
            cfg.temporal_bases
        );
        temporal.resize(cfg.temporal_len(), 0.0);
    }
    Ok(UtteranceFeature {
        spectral,
        temporal,
        config: *cfg,
        meta,
        padded,
    })
}
