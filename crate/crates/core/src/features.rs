//! Waveform to feature pipeline and on-disk feature sets.
//!
//! A feature set directory holds one STBF vector per utterance plus
//! `features.json`, which records the configuration and utterance metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{UtteranceMeta, Waveform};
use crate::error::{Error, Result};
use crate::spectrogram::{fbank_delta, mel_spectrogram, AcousticFeatures, FrontEndConfig};
use crate::stbf::{self, Tensor, TensorData};
use crate::subspace::{utterance_feature, SubspaceConfig, UtteranceFeature};

/// Subspace feature of one waveform.
pub fn extract_feature(
    w: &Waveform,
    front_end: &FrontEndConfig,
    subspace: &SubspaceConfig,
    meta: UtteranceMeta,
) -> Result<UtteranceFeature> {
    let mel = mel_spectrogram(w, front_end)?;
    utterance_feature(&mel, subspace, meta)
}

/// Subspace feature and FBank + delta frames from one mel analysis.
pub fn extract_all(
    w: &Waveform,
    front_end: &FrontEndConfig,
    subspace: &SubspaceConfig,
    meta: UtteranceMeta,
) -> Result<(UtteranceFeature, AcousticFeatures)> {
    let mel = mel_spectrogram(w, front_end)?;
    let feature = utterance_feature(&mel, subspace, meta)?;
    Ok((feature, fbank_delta(&mel)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub file: PathBuf,
    pub meta: UtteranceMeta,
    pub padded: bool,
}

/// Index written next to the per-utterance STBF files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub subspace: SubspaceConfig,
    pub mel_channels: usize,
    pub entries: Vec<FeatureEntry>,
}

pub const INDEX_FILE: &str = "features.json";

/// File name used for an utterance's feature vector.
pub fn feature_file_name(meta: &UtteranceMeta) -> PathBuf {
    PathBuf::from(format!("{}_{}_{}.stbf", meta.speaker_id, meta.block_id, meta.word_id))
}

pub fn feature_tensor(f: &UtteranceFeature) -> Tensor {
    let v = f.to_vec();
    Tensor {
        shape: vec![v.len()],
        data: TensorData::F64(v),
    }
}

/// Writes features and their index into `dir`.
pub fn save_feature_set(
    dir: &Path,
    features: &[UtteranceFeature],
    subspace: SubspaceConfig,
    mel_channels: usize,
) -> Result<FeatureIndex> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(features.len());
    for f in features {
        if f.config != subspace {
            return Err(Error::Shape("feature was extracted with a different subspace configuration".into()));
        }
        let file = feature_file_name(&f.meta);
        stbf::save(&dir.join(&file), &feature_tensor(f))?;
        entries.push(FeatureEntry {
            file,
            meta: f.meta.clone(),
            padded: f.padded,
        });
    }
    let index = FeatureIndex {
        subspace,
        mel_channels,
        entries,
    };
    write_index(dir, &index)?;
    Ok(index)
}

pub fn write_index(dir: &Path, index: &FeatureIndex) -> Result<()> {
    let path = dir.join(INDEX_FILE);
    let json = serde_json::to_string_pretty(index)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Reads a feature set written by [`save_feature_set`].
pub fn load_feature_set(dir: &Path) -> Result<(FeatureIndex, Vec<UtteranceFeature>)> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: FeatureIndex = serde_json::from_str(&text)?;
    let mut out = Vec::with_capacity(index.entries.len());
    for e in &index.entries {
        let t = stbf::load(&dir.join(&e.file))?;
        let mut f = UtteranceFeature::from_flat(&t.data.to_f64(), index.subspace, index.mel_channels, e.meta.clone())?;
        f.padded = e.padded;
        out.push(f);
    }
    Ok((index, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Intelligibility;

    fn tone(n: usize, hz: f64) -> Waveform {
        let s = (0..n)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * hz * i as f64 / 16000.0).sin() + 0.01 * ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        Waveform::new(s, 16000, "t")
    }

    fn meta(word: &str) -> UtteranceMeta {
        UtteranceMeta {
            speaker_id: "S1".into(),
            block_id: "B1".into(),
            word_id: word.into(),
            intelligibility: Intelligibility::M,
        }
    }

    #[test]
    fn default_feature_has_410_dims() {
        let (f, a) = extract_all(&tone(8000, 440.0), &FrontEndConfig::default(), &SubspaceConfig::default(), meta("W01")).unwrap();
        assert_eq!(f.len(), 410);
        assert_eq!(a.dim(), 160);
    }

    #[test]
    fn feature_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fe = FrontEndConfig::default();
        let sub = SubspaceConfig::default();
        let feats: Vec<_> = [("W01", 300.0), ("W02", 900.0)]
            .iter()
            .map(|(w, hz)| extract_feature(&tone(6000, *hz), &fe, &sub, meta(w)).unwrap())
            .collect();
        save_feature_set(dir.path(), &feats, SubspaceConfig::default(), 80).unwrap();
        let (index, back) = load_feature_set(dir.path()).unwrap();
        assert_eq!(index.entries.len(), 2);
        assert_eq!(back, feats);
    }
}
