use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainedClassifier;
use crate::audio::Intelligibility;
use crate::error::{Error, Result};
use crate::stbf::{self, Tensor, TensorData};
use crate::subspace::UtteranceFeature;

/// Speaker-level average of per-utterance bottleneck activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub speaker_id: String,
    pub vector: Vec<f64>,
    pub n_utterances: usize,
    pub intelligibility: Intelligibility,
}

/// Averages bottleneck outputs per speaker; results are sorted by speaker id.
pub fn average_by_speaker(
    bottleneck: &ndarray::Array2<f64>,
    features: &[UtteranceFeature],
) -> Result<Vec<SpeakerEmbedding>> {
    if bottleneck.nrows() != features.len() {
        return Err(Error::Shape(format!(
            "{} bottleneck rows for {} utterances",
            bottleneck.nrows(),
            features.len()
        )));
    }
    let mut acc: BTreeMap<&str, SpeakerEmbedding> = BTreeMap::new();
    for (row, f) in bottleneck.rows().into_iter().zip(features) {
        let e = acc.entry(&f.meta.speaker_id).or_insert_with(|| SpeakerEmbedding {
            speaker_id: f.meta.speaker_id.clone(),
            vector: vec![0.0; row.len()],
            n_utterances: 0,
            intelligibility: f.meta.intelligibility,
        });
        if e.intelligibility != f.meta.intelligibility {
            return Err(Error::Data(format!(
                "speaker {} is labelled both {} and {}",
                f.meta.speaker_id, e.intelligibility, f.meta.intelligibility
            )));
        }
        e.vector.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        e.n_utterances += 1;
    }
    let mut out: Vec<SpeakerEmbedding> = acc.into_values().collect();
    for e in &mut out {
        let n = e.n_utterances as f64;
        e.vector.iter_mut().for_each(|v| *v /= n);
        if e.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite embedding for {}", e.speaker_id)));
        }
    }
    Ok(out)
}

/// Evaluation-mode bottleneck outputs averaged per speaker.
pub fn extract_embeddings(clf: &TrainedClassifier, features: &[UtteranceFeature]) -> Result<Vec<SpeakerEmbedding>> {
    let (_, bottleneck) = clf.infer(features)?;
    average_by_speaker(&bottleneck, features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingRow {
    row: usize,
    speaker_id: String,
    n_utterances: usize,
    intelligibility: Intelligibility,
}

/// Writes an S×D STBF matrix and a JSON sidecar (`<path>.json`) mapping
/// speakers to rows.
pub fn save_embeddings(path: &Path, embeddings: &[SpeakerEmbedding]) -> Result<()> {
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    let mut data = Vec::with_capacity(embeddings.len() * dim);
    let mut rows = Vec::with_capacity(embeddings.len());
    for (i, e) in embeddings.iter().enumerate() {
        if e.vector.len() != dim {
            return Err(Error::Shape("embeddings differ in dimension".into()));
        }
        data.extend_from_slice(&e.vector);
        rows.push(EmbeddingRow {
            row: i,
            speaker_id: e.speaker_id.clone(),
            n_utterances: e.n_utterances,
            intelligibility: e.intelligibility,
        });
    }
    stbf::save(path, &Tensor::new(vec![embeddings.len(), dim], TensorData::F64(data))?)?;
    let side = sidecar(path);
    std::fs::write(&side, serde_json::to_string_pretty(&rows)?).map_err(|e| Error::io(&side, e))
}

pub fn load_embeddings(path: &Path) -> Result<Vec<SpeakerEmbedding>> {
    let t = stbf::load(path)?;
    let side = sidecar(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let rows: Vec<EmbeddingRow> = serde_json::from_str(&text)?;
    let [n, dim] = t.shape[..] else {
        return Err(Error::Shape(format!("embedding tensor has shape {:?}", t.shape)));
    };
    if n != rows.len() {
        return Err(Error::Data(format!("{} sidecar rows for {n} embeddings", rows.len())));
    }
    let data = t.data.to_f64();
    rows.into_iter()
        .map(|r| {
            if r.row >= n {
                return Err(Error::Data(format!("sidecar row {} out of range", r.row)));
            }
            Ok(SpeakerEmbedding {
                speaker_id: r.speaker_id,
                vector: data[r.row * dim..(r.row + 1) * dim].to_vec(),
                n_utterances: r.n_utterances,
                intelligibility: r.intelligibility,
            })
        })
        .collect()
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Mean silhouette coefficient of `points` under `labels` (Euclidean).
/// Singleton clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i != j {
                let e = sums.entry(labels[j]).or_default();
                e.0 += dist(&points[i], &points[j]);
                e.1 += 1;
            }
        }
        let Some(&(own, own_n)) = sums.get(&labels[i]) else { continue };
        let a = own / own_n as f64;
        let b = sums
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b).max(f64::MIN_POSITIVE);
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::UtteranceMeta;
    use crate::subspace::SubspaceConfig;
    use ndarray::{array, Array2};

    fn feat(spk: &str, g: Intelligibility) -> UtteranceFeature {
        UtteranceFeature {
            spectral: vec![],
            temporal: vec![],
            config: SubspaceConfig::default(),
            meta: UtteranceMeta {
                speaker_id: spk.into(),
                block_id: "B1".into(),
                word_id: "W01".into(),
                intelligibility: g,
            },
            padded: false,
        }
    }

    #[test]
    fn single_utterance_is_its_own_mean() {
        let b = array![[1.0, 2.0]];
        let e = average_by_speaker(&b, &[feat("a", Intelligibility::M)]).unwrap();
        assert_eq!(e[0].vector, vec![1.0, 2.0]);
        assert_eq!(e[0].n_utterances, 1);
    }

    #[test]
    fn duplicating_utterances_keeps_means() {
        let b = array![[1.0, 2.0], [3.0, 6.0], [5.0, 0.0]];
        let f = vec![feat("a", Intelligibility::M), feat("a", Intelligibility::M), feat("b", Intelligibility::CTL)];
        let once = average_by_speaker(&b, &f).unwrap();
        let b2 = ndarray::concatenate![ndarray::Axis(0), b, b];
        let f2: Vec<_> = f.iter().chain(&f).cloned().collect();
        let twice = average_by_speaker(&b2, &f2).unwrap();
        for (x, y) in once.iter().zip(&twice) {
            assert_eq!(x.vector, y.vector);
        }
        assert_eq!(once[0].vector, vec![2.0, 4.0]);
    }

    #[test]
    fn conflicting_labels_rejected() {
        let b = Array2::zeros((2, 1));
        let f = vec![feat("a", Intelligibility::M), feat("a", Intelligibility::H)];
        assert!(matches!(average_by_speaker(&b, &f), Err(Error::Data(_))));
    }

    #[test]
    fn silhouette_extremes() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        assert!(silhouette(&pts, &[0, 0, 1, 1]) > 0.9);
        assert!(silhouette(&pts, &[0, 1, 0, 1]) < 0.0);
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.stbf");
        let e = vec![
            SpeakerEmbedding { speaker_id: "a".into(), vector: vec![1.0, -2.0], n_utterances: 3, intelligibility: Intelligibility::L },
            SpeakerEmbedding { speaker_id: "b".into(), vector: vec![0.5, 0.25], n_utterances: 1, intelligibility: Intelligibility::CTL },
        ];
        save_embeddings(&path, &e).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), e);
    }
}
