//! Whole-pipeline configuration: TOML files plus `section.key=value`
//! overrides, validated with errors that name the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{BenchmarkConfig, CorpusConfig, WordModelConfig};
use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::spectrogram::FrontEndConfig;
use crate::subspace::SubspaceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random stream is derived from it by name.
    pub seed: u64,
    pub front_end: FrontEndConfig,
    pub subspace: SubspaceConfig,
    pub classifier: ClassifierConfig,
    pub corpus: CorpusConfig,
    pub adapt: WordModelConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            front_end: FrontEndConfig::default(),
            subspace: SubspaceConfig::default(),
            classifier: ClassifierConfig::default(),
            corpus: CorpusConfig::default(),
            adapt: WordModelConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

fn prefixed(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { field, reason } if !field.starts_with(section) => Error::Config {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    })
}

fn toml_error(e: impl std::fmt::Display) -> Error {
    // toml messages start with the location and name the key
    Error::config("config", e.to_string().trim().to_string())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(toml_error)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }

    /// Applies one `a.b.c=value` override. The value is read as a TOML
    /// literal when possible and as a bare string otherwise.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let path = path.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));

        let mut root = toml::Value::try_from(&*self).map_err(toml_error)?;
        let keys: Vec<&str> = path.split('.').collect();
        let mut node = &mut root;
        for (i, key) in keys.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::config(path, format!("`{}` is not a section", keys[..i].join("."))))?;
            if i + 1 == keys.len() {
                // optional fields are absent when unset
                let known = table.contains_key(*key) || self.optional_key(&keys);
                if !known {
                    return Err(Error::config(path, "unknown key"));
                }
                table.insert((*key).to_string(), value);
                break;
            }
            node = table.get_mut(*key).ok_or_else(|| Error::config(path, "unknown key"))?;
        }
        let updated: PipelineConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(path, e.message().to_string()))?;
        *self = updated;
        Ok(())
    }

    fn optional_key(&self, keys: &[&str]) -> bool {
        keys == ["front_end", "fft_size"]
    }

    pub fn validate(&self) -> Result<()> {
        prefixed("front_end", self.front_end.validate())?;
        prefixed("subspace", self.subspace.validate())?;
        if self.subspace.spectral_bases > self.front_end.mel_channels {
            return Err(Error::config(
                "subspace.spectral_bases",
                format!("{} exceeds front_end.mel_channels", self.subspace.spectral_bases),
            ));
        }
        prefixed("classifier", self.classifier.validate())?;
        prefixed("corpus", self.corpus.validate())?;
        prefixed("adapt", self.adapt.validate())?;
        if self.benchmark.seeds.is_empty() {
            return Err(Error::config("benchmark.seeds", "at least one seed is required"));
        }
        if self.benchmark.test_block == self.adapt.adapt_block {
            return Err(Error::config("adapt.adapt_block", "must differ from benchmark.test_block"));
        }
        Ok(())
    }
}
