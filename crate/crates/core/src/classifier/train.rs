use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Intelligibility;
use crate::error::{Error, Result};
use crate::neural::{
    grad_check, load_checkpoint, mtl_loss, save_checkpoint, Batch, CheckpointHeader, Freeze, GradCheckOptions,
    GradCheckReport, HeadSpec, LayerSpec, Mode, MtlBatch, Network, NetworkSpec, Sgd, MAX_BATCH,
};
use crate::seed;
use crate::subspace::{InputConfig, UtteranceFeature};

/// Which label heads the classifier is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LabelConfig {
    IntelOnly,
    #[default]
    #[serde(rename = "Intel+SpkrID")]
    IntelSpkr,
}

impl LabelConfig {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelConfig::IntelOnly => "Intel",
            LabelConfig::IntelSpkr => "Intel+SpkrID",
        }
    }
}

impl std::str::FromStr for LabelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "intel" | "intel-only" | "intelonly" => Ok(LabelConfig::IntelOnly),
            "intel+spkrid" | "intel+spkr" | "mtl" => Ok(LabelConfig::IntelSpkr),
            other => Err(Error::config("labels", format!("unknown label configuration `{other}`"))),
        }
    }
}

/// Architecture and optimisation settings of the intelligibility classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub bottleneck_dim: usize,
    pub projection_dim: usize,
    pub dropout: f64,
    pub labels: LabelConfig,
    /// Weight of the intelligibility head; the speaker head gets the rest.
    pub intel_weight: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_dim: 2000,
            bottleneck_dim: 25,
            projection_dim: 512,
            dropout: 0.2,
            labels: LabelConfig::IntelSpkr,
            intel_weight: 0.5,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            l2: 0.0,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("classifier.{name}");
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("bottleneck_dim", self.bottleneck_dim),
            ("projection_dim", self.projection_dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ] {
            if v == 0 {
                return Err(Error::config(f(name), "must be at least 1"));
            }
        }
        if self.projection_dim >= self.hidden_dim {
            return Err(Error::config(f("projection_dim"), "must be below hidden_dim"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(f("batch_size"), "batch normalisation needs at least 2 rows"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(f("dropout"), format!("{} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.intel_weight) {
            return Err(Error::config(f("intel_weight"), format!("{} outside [0, 1]", self.intel_weight)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(f("learning_rate"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(f("momentum"), format!("{} outside [0, 1)", self.momentum)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config(f("l2"), "must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::config(f("validation_fraction"), format!("{} outside [0, 0.5)", self.validation_fraction)));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        match self.labels {
            LabelConfig::IntelOnly => vec![1.0],
            LabelConfig::IntelSpkr => vec![self.intel_weight, 1.0 - self.intel_weight],
        }
    }
}

/// Four hidden layers: `Affine → ReLU → BN → Dropout` for the first three,
/// bias-free projections feeding layers 2 and 3, a skip from the first
/// layer's output to the third's, and a bottleneck fourth layer
/// `Affine → ReLU → BN` whose output is the embedding tap.
pub fn classifier_spec(input_dim: usize, speakers: usize, cfg: &ClassifierConfig) -> NetworkSpec {
    let h = cfg.hidden_dim;
    let p = cfg.projection_dim;
    let drop = |dim| LayerSpec::Dropout { dim, rate: cfg.dropout };
    let trunk = vec![
        LayerSpec::Affine { in_dim: input_dim, out_dim: h },
        LayerSpec::Relu { dim: h },
        LayerSpec::BatchNorm { dim: h },
        drop(h),
        LayerSpec::Projection { in_dim: h, out_dim: p },
        LayerSpec::Affine { in_dim: p, out_dim: h },
        LayerSpec::Relu { dim: h },
        LayerSpec::BatchNorm { dim: h },
        drop(h),
        LayerSpec::Projection { in_dim: h, out_dim: p },
        LayerSpec::Affine { in_dim: p, out_dim: h },
        LayerSpec::Relu { dim: h },
        LayerSpec::BatchNorm { dim: h },
        LayerSpec::Skip { dim: h, source: 3 },
        drop(h),
        LayerSpec::Affine { in_dim: h, out_dim: cfg.bottleneck_dim },
        LayerSpec::Relu { dim: cfg.bottleneck_dim },
        LayerSpec::BatchNorm { dim: cfg.bottleneck_dim },
    ];
    let mut heads = vec![HeadSpec::softmax("intelligibility", cfg.bottleneck_dim, Intelligibility::ALL.len())];
    if cfg.labels == LabelConfig::IntelSpkr {
        heads.push(HeadSpec::softmax("speaker", cfg.bottleneck_dim, speakers));
    }
    NetworkSpec { input_dim, trunk, heads }
}

/// Gradient check of the full classifier in double precision on a random
/// batch of [`MAX_BATCH`] rows, with dropout masks sampled once and held fixed.
pub fn classifier_grad_check(
    input_dim: usize,
    speakers: usize,
    cfg: &ClassifierConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let spec = classifier_spec(input_dim, speakers, cfg);
    let net = Network::<f64>::new(spec, opts.seed)?;
    let mut rng = seed::rng(opts.seed, "gradcheck/batch");
    let x = Array2::from_shape_simple_fn((MAX_BATCH, input_dim), || rng.random_range(-1.0..1.0));
    let intel: Vec<usize> = (0..MAX_BATCH).map(|i| i % Intelligibility::ALL.len()).collect();
    let spk: Vec<usize> = (0..MAX_BATCH).map(|_| rng.random_range(0..speakers.max(1))).collect();
    let weights = cfg.weights();
    let labels: Vec<&[usize]> = if weights.len() == 2 { vec![&intel, &spk] } else { vec![&intel] };
    let batch = MtlBatch {
        inputs: x.view(),
        labels,
        weights,
        speakers: None,
    };
    let masks = net.sample_masks(MAX_BATCH, &mut rng);
    grad_check(&net, &batch, Some(&masks), opts)
}

/// Per-dimension z-scoring fitted on training inputs. Constant dimensions
/// are centred only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).map_or_else(|| vec![0.0; x.ncols()], |m| m.to_vec());
        let scale = x
            .std_axis(Axis(0), 0.0)
            .iter()
            .map(|&s| if s > 1e-12 { 1.0 / s } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f32> {
        let mut out = Array2::zeros(x.raw_dim());
        for (mut o, row) in out.rows_mut().into_iter().zip(x.rows()) {
            for (k, (ov, &v)) in o.iter_mut().zip(row).enumerate() {
                *ov = ((v - self.mean[k]) * self.scale[k]) as f32;
            }
        }
        out
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Everything needed to apply a trained classifier to new features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub input: InputConfig,
    pub labels: LabelConfig,
    pub speakers: Vec<String>,
    pub standardizer: Standardizer,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub net: Network<f32>,
    pub meta: ClassifierMeta,
    pub seed: u64,
}

/// Stacks the chosen part of each feature into an N×D matrix.
pub fn design_matrix(features: &[UtteranceFeature], input: InputConfig) -> Result<Array2<f64>> {
    let dim = features.first().map_or(0, |f| f.input(input).len());
    let mut x = Array2::zeros((features.len(), dim));
    for (mut row, f) in x.rows_mut().into_iter().zip(features) {
        let v = f.input(input);
        if v.len() != dim {
            return Err(Error::Shape(format!("feature dims differ: {} vs {dim}", v.len())));
        }
        row.assign(&Array1::from(v));
    }
    Ok(x)
}

/// Stratified split: `fraction` of each class (at least one row when the
/// class has two or more) goes to validation.
fn stratified_split(labels: &[usize], fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        let n_val = if fraction > 0.0 && idx.len() >= 2 {
            ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn rows(x: &Array2<f32>, idx: &[usize]) -> Array2<f32> {
    x.select(Axis(0), idx)
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Mean weighted cross-entropy in evaluation mode.
fn eval_loss(net: &Network<f32>, x: &Array2<f32>, labels: &[Vec<usize>], weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let n = x.nrows();
    for start in (0..n).step_by(256) {
        let end = (start + 256).min(n);
        let xb = x.slice(ndarray::s![start..end, ..]);
        let out = net.predict(&Batch::new(xb))?;
        let lb: Vec<&[usize]> = labels.iter().map(|l| &l[start..end]).collect();
        total += mtl_loss(&out.heads, &lb, weights)?.loss * (end - start) as f64;
    }
    Ok(total / n as f64)
}

/// Trains the classifier on `features` with minibatch SGD and early
/// stopping on held-out cross-entropy; the best validation epoch is kept.
pub fn train_classifier(
    features: &[UtteranceFeature],
    input: InputConfig,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::TrainingData("no training features".into()));
    }
    let raw = design_matrix(features, input)?;
    let intel: Vec<usize> = features.iter().map(|f| f.meta.intelligibility.index()).collect();
    let mut speakers: Vec<String> = features.iter().map(|f| f.meta.speaker_id.clone()).collect();
    speakers.sort_unstable();
    speakers.dedup();
    let spk: Vec<usize> = features
        .iter()
        .map(|f| speakers.binary_search(&f.meta.speaker_id).expect("speaker listed"))
        .collect();
    let distinct = |l: &[usize]| {
        let mut v = l.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    if distinct(&intel) < 2 {
        return Err(Error::TrainingData("fewer than 2 intelligibility groups present".into()));
    }
    if cfg.labels == LabelConfig::IntelSpkr && speakers.len() < 2 {
        return Err(Error::TrainingData("fewer than 2 speakers present".into()));
    }

    let standardizer = Standardizer::fit(&raw);
    let x = standardizer.apply(&raw);
    let spec = classifier_spec(x.ncols(), speakers.len(), cfg);
    let mut net = Network::<f32>::new(spec, seed::derive(seed, "classifier/init"))?;
    let mut rng = seed::rng(seed, "classifier/train");
    let (train_idx, val_idx) = stratified_split(&intel, cfg.validation_fraction, &mut rng);
    let heads = |idx: &[usize]| -> Vec<Vec<usize>> {
        match cfg.labels {
            LabelConfig::IntelOnly => vec![pick(&intel, idx)],
            LabelConfig::IntelSpkr => vec![pick(&intel, idx), pick(&spk, idx)],
        }
    };
    let weights = cfg.weights();
    let x_val = rows(&x, &val_idx);
    let y_val = heads(&val_idx);

    let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.l2)?;
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xb = rows(&x, chunk);
            let yb = heads(chunk);
            let labels: Vec<&[usize]> = yb.iter().map(Vec::as_slice).collect();
            let batch = Batch::new(xb.view());
            let masks = net.sample_masks(chunk.len(), &mut rng);
            let out = net.forward(&batch, Mode::Train, Some(&masks))?;
            let loss = mtl_loss(&out.heads, &labels, &weights)?;
            if !loss.loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
            }
            let grads = net.backward(&out, &batch, &loss.logit_grads)?;
            net.update_running_stats(&out);
            sgd.step(&mut net, &grads, Freeze::None)?;
            sum += loss.loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = sum / seen.max(1) as f64;
        let validation_loss = if val_idx.is_empty() {
            train_loss
        } else {
            eval_loss(&net, &x_val, &y_val, &weights)?
        };
        log::debug!("classifier epoch {epoch}: train {train_loss:.4} validation {validation_loss:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best.0 {
            best = (validation_loss, epoch, net.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    Ok(TrainedClassifier {
        net: best.2,
        meta: ClassifierMeta {
            input,
            labels: cfg.labels,
            speakers,
            standardizer,
            history,
            best_epoch: best.1,
        },
        seed,
    })
}

impl TrainedClassifier {
    /// Intelligibility posteriors (N×5) and bottleneck outputs (N×bottleneck).
    pub fn infer(&self, features: &[UtteranceFeature]) -> Result<(Array2<f64>, Array2<f64>)> {
        let raw = design_matrix(features, self.meta.input)?;
        if raw.ncols() != self.net.spec().input_dim && !features.is_empty() {
            return Err(Error::Shape(format!(
                "classifier trained on {} ({} dims) but features give {} dims",
                self.meta.input.as_str(),
                self.net.spec().input_dim,
                raw.ncols()
            )));
        }
        let x = self.meta.standardizer.apply(&raw);
        let n = x.nrows();
        let mut probs = Array2::zeros((n, Intelligibility::ALL.len()));
        let mut bottleneck = Array2::zeros((n, self.net.spec().trunk_dim()));
        for start in (0..n).step_by(256) {
            let end = (start + 256).min(n);
            let out = self.net.predict(&Batch::new(x.slice(ndarray::s![start..end, ..])))?;
            probs
                .slice_mut(ndarray::s![start..end, ..])
                .assign(&out.heads[0].mapv(f64::from));
            bottleneck
                .slice_mut(ndarray::s![start..end, ..])
                .assign(&out.trunk.mapv(f64::from));
        }
        Ok((probs, bottleneck))
    }

    /// Argmax intelligibility group per utterance.
    pub fn predict(&self, features: &[UtteranceFeature]) -> Result<Vec<Intelligibility>> {
        let (probs, _) = self.infer(features)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| {
                let k = r
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(k, _)| k);
                Intelligibility::from_index(k).expect("five classes")
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = CheckpointHeader::new(self.net.spec().clone(), self.seed);
        header.epoch = self.meta.best_epoch;
        header.metrics = serde_json::json!({
            "best_validation_loss": self.meta.history.get(self.meta.best_epoch.saturating_sub(1)).map(|r| r.validation_loss),
            "epochs_run": self.meta.history.len(),
        });
        header.extra = serde_json::to_value(&self.meta)?;
        save_checkpoint(path, &self.net, &header)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, header) = load_checkpoint::<f32>(path)?;
        let meta: ClassifierMeta = serde_json::from_value(header.extra)?;
        Ok(TrainedClassifier {
            net,
            meta,
            seed: header.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_architecture_dims() {
        let cfg = ClassifierConfig::default();
        let spec = classifier_spec(410, 29, &cfg);
        spec.validate().unwrap();
        assert_eq!(spec.trunk_dim(), 25);
        assert_eq!(spec.heads[0].classes(), 5);
        assert_eq!(spec.heads[1].classes(), 29);
        let hidden: Vec<usize> = spec
            .trunk
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Affine { out_dim, .. } => Some(*out_dim),
                _ => None,
            })
            .collect();
        assert_eq!(hidden, vec![2000, 2000, 2000, 25]);
        let net = Network::<f32>::new(spec, 1).unwrap();
        let x = Array2::<f32>::zeros((3, 410));
        let out = net.predict(&Batch::new(x.view())).unwrap();
        assert_eq!(out.heads[0].dim(), (3, 5));
        assert_eq!(out.heads[1].dim(), (3, 29));
        assert_eq!(out.trunk.dim(), (3, 25));
        let intel_only = classifier_spec(160, 29, &ClassifierConfig { labels: LabelConfig::IntelOnly, ..cfg });
        assert_eq!(intel_only.heads.len(), 1);
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..200).map(|i| i % 5).collect();
        let (train, val) = stratified_split(&labels, 0.1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(train.len() + val.len(), 200);
        for c in 0..5 {
            assert_eq!(val.iter().filter(|&&i| labels[i] == c).count(), 4);
        }
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let x = ndarray::array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(&x);
        let z = s.apply(&x);
        assert_eq!(z, ndarray::array![[-1.0f32, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = ClassifierConfig { dropout: 1.0, ..Default::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("classifier.dropout"), "{err}");
    }
}
