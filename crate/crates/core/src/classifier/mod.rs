//! DNN speech intelligibility classifier over utterance subspace features,
//! its assessment reports and speaker-averaged bottleneck embeddings.

mod embed;
mod report;
mod train;

pub use embed::{average_by_speaker, extract_embeddings, load_embeddings, save_embeddings, silhouette, SpeakerEmbedding};
pub use report::{assess, assess_predictions, write_reports_csv, AssessmentMode, AssessmentReport};
pub use train::{
    classifier_grad_check, classifier_spec, design_matrix, train_classifier, ClassifierConfig, ClassifierMeta, EpochRecord, LabelConfig,
    Standardizer, TrainedClassifier,
};
