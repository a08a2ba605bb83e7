//! Auxiliary-feature and LHUC speaker adaptation of a frame-level word
//! classifier on a synthetic multi-speaker corpus.

mod bench;
pub mod corpus;
mod model;

pub use bench::{
    mcnemar, mcnemar_p, run_benchmark, BenchmarkConfig, BenchmarkResult, EmbeddingSets, McNemar, SystemResult,
};
pub use corpus::{
    default_profiles, generate_corpus, severity_band, CorpusConfig, CorpusScheme, SyntheticCorpus,
    SyntheticSpeakerProfile, UtteranceSpec, Vocabulary,
};
pub use model::{
    train_adapted, word_model_spec, AdaptationConfig, AuxFeature, FrameNorm, WordModel, DEFAULT_LHUC_LAYER, WordModelConfig,
    WordUtterance,
};
