//! End-to-end library pipeline on a tiny corpus written to disk.

use subbasis_core::adapt::{CorpusConfig, SyntheticCorpus};
use subbasis_core::audio::{load_wav, read_manifest};
use subbasis_core::classifier::{
    extract_embeddings, load_embeddings, save_embeddings, train_classifier, ClassifierConfig, TrainedClassifier,
};
use subbasis_core::features::{extract_feature, load_feature_set, save_feature_set};
use subbasis_core::spectrogram::FrontEndConfig;
use subbasis_core::subspace::{InputConfig, SubspaceConfig, UtteranceFeature};

fn tiny_corpus() -> CorpusConfig {
    CorpusConfig {
        dysarthric_per_group: [1, 1, 1, 1],
        control_speakers: 1,
        blocks: 2,
        vocab_size: 3,
        ..CorpusConfig::default()
    }
}

fn extract_from_disk(dir: &std::path::Path) -> Vec<UtteranceFeature> {
    let corpus = SyntheticCorpus::from_config(&tiny_corpus(), 5).unwrap();
    corpus.write(dir).unwrap();
    let manifest = dir.join("manifest.csv");
    let rows = read_manifest(&manifest).unwrap();
    assert_eq!(rows.len(), corpus.len());
    rows.iter()
        .map(|r| {
            let w = load_wav(r.resolve(dir)).unwrap();
            extract_feature(&w, &FrontEndConfig::default(), &SubspaceConfig::default(), r.meta()).unwrap()
        })
        .collect()
}

#[test]
fn features_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let features = extract_from_disk(&dir.path().join("corpus"));
    assert!(features.iter().all(|f| f.len() == 410));

    let set = dir.path().join("feats");
    let mel = FrontEndConfig::default().mel_channels;
    save_feature_set(&set, &features, SubspaceConfig::default(), mel).unwrap();
    let (index, back) = load_feature_set(&set).unwrap();
    assert_eq!(index.entries.len(), features.len());
    for (a, b) in features.iter().zip(&back) {
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.to_vec(), b.to_vec());
    }
}

#[test]
fn classifier_checkpoint_and_embeddings_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let features = extract_from_disk(&dir.path().join("corpus"));
    let cfg = ClassifierConfig {
        hidden_dim: 32,
        projection_dim: 8,
        max_epochs: 2,
        ..ClassifierConfig::default()
    };
    let clf = train_classifier(&features, InputConfig::SBTB, &cfg, 3).unwrap();
    let ckpt = dir.path().join("clf.ckpt");
    clf.save(&ckpt).unwrap();
    let loaded = TrainedClassifier::load(&ckpt).unwrap();
    assert_eq!(clf.predict(&features).unwrap(), loaded.predict(&features).unwrap());

    let emb = extract_embeddings(&loaded, &features).unwrap();
    assert_eq!(emb.len(), 5);
    assert!(emb.iter().all(|e| e.vector.len() == 25));
    let path = dir.path().join("emb.stbf");
    save_embeddings(&path, &emb).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), emb);
}
