//! Corpus manifest: `path,speaker_id,block_id,word_id,intelligibility`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Intelligibility, UtteranceMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub speaker_id: String,
    pub block_id: String,
    pub word_id: String,
    pub intelligibility: Intelligibility,
}

impl ManifestRow {
    pub fn meta(&self) -> UtteranceMeta {
        UtteranceMeta {
            speaker_id: self.speaker_id.clone(),
            block_id: self.block_id.clone(),
            word_id: self.word_id.clone(),
            intelligibility: self.intelligibility,
        }
    }

    /// Resolves a relative audio path against the manifest's directory.
    pub fn resolve(&self, manifest_dir: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            manifest_dir.join(&self.path)
        }
    }
}

const HEADER: [&str; 5] = ["path", "speaker_id", "block_id", "word_id", "intelligibility"];

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Manifest(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Manifest(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    if rows.is_empty() {
        writer
            .write_record(HEADER)
            .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![ManifestRow {
            path: "a/b.wav".into(),
            speaker_id: "F02".into(),
            block_id: "B1".into(),
            word_id: "W03".into(),
            intelligibility: Intelligibility::VL,
        }];
        write_manifest(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,speaker_id,block_id,word_id,intelligibility\n"));
        assert_eq!(read_manifest(&p).unwrap(), rows);

        write_manifest(&p, &[]).unwrap();
        assert!(read_manifest(&p).unwrap().is_empty());

        std::fs::write(&p, "path,speaker_id,block_id,word_id,intelligibility\nx.wav,S,B1,W,XX\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Manifest(_))));
        std::fs::write(&p, "file,speaker\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Manifest(_))));
    }
}
