use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::UtteranceMeta;
use crate::classifier::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::neural::{mtl_loss, Batch, Freeze, HeadSpec, LayerSpec, Mode, Network, NetworkSpec, Sgd};
use crate::seed;
use crate::spectrogram::AcousticFeatures;

use super::corpus::Vocabulary;

/// Speaker embedding appended to every acoustic frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum AuxFeature {
    #[default]
    None,
    SBE,
    TBE,
    #[serde(rename = "SBE+TBE")]
    SBETBE,
}

impl AuxFeature {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxFeature::None => "none",
            AuxFeature::SBE => "SBE",
            AuxFeature::TBE => "TBE",
            AuxFeature::SBETBE => "SBE+TBE",
        }
    }
}

/// LHUC sits after the last hidden layer of the default word model.
pub const DEFAULT_LHUC_LAYER: usize = 2;

/// One system of the adaptation comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub aux_feature: AuxFeature,
    pub lhuc: bool,
    /// Hidden layer (0-based) whose output is LHUC-scaled.
    pub lhuc_layer: usize,
    /// Replace every embedding by zeros (ablation).
    #[serde(default)]
    pub zero_embedding: bool,
}

impl AdaptationConfig {
    pub fn si() -> Self {
        AdaptationConfig {
            aux_feature: AuxFeature::None,
            lhuc: false,
            lhuc_layer: DEFAULT_LHUC_LAYER,
            zero_embedding: false,
        }
    }

    pub fn with_aux(aux: AuxFeature) -> Self {
        AdaptationConfig {
            aux_feature: aux,
            ..Self::si()
        }
    }

    pub fn with_lhuc(mut self) -> Self {
        self.lhuc = true;
        self
    }

    pub fn zeroed(mut self) -> Self {
        self.zero_embedding = true;
        self
    }

    /// Short name such as `si`, `sbe`, `sbe+tbe-lhuc` or `sbe-zero`.
    pub fn name(&self) -> String {
        let mut n = match self.aux_feature {
            AuxFeature::None => "si".to_string(),
            a => a.as_str().to_ascii_lowercase(),
        };
        if self.zero_embedding {
            n.push_str("-zero");
        }
        if self.lhuc {
            n.push_str("-lhuc");
        }
        n
    }

    pub fn validate(&self, hidden_layers: usize) -> Result<()> {
        if self.lhuc && self.lhuc_layer >= hidden_layers {
            return Err(Error::config(
                "lhuc_layer",
                format!("{} but the word model has {hidden_layers} hidden layers", self.lhuc_layer),
            ));
        }
        if self.zero_embedding && self.aux_feature == AuxFeature::None {
            return Err(Error::config("zero_embedding", "needs an auxiliary feature to zero"));
        }
        Ok(())
    }
}

impl std::str::FromStr for AdaptationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let mut rest = lower.as_str();
        let mut cfg = AdaptationConfig::si();
        if let Some(r) = rest.strip_suffix("-lhuc") {
            cfg.lhuc = true;
            rest = r;
        }
        if let Some(r) = rest.strip_suffix("-zero") {
            cfg.zero_embedding = true;
            rest = r;
        }
        cfg.aux_feature = match rest {
            "si" | "none" => AuxFeature::None,
            "sbe" => AuxFeature::SBE,
            "tbe" => AuxFeature::TBE,
            "sbe+tbe" | "sbetbe" => AuxFeature::SBETBE,
            other => return Err(Error::config("configs", format!("unknown system `{other}`"))),
        };
        if cfg.zero_embedding && cfg.aux_feature == AuxFeature::None {
            return Err(Error::config("configs", format!("`{s}` zeroes an embedding it does not use")));
        }
        Ok(cfg)
    }
}

/// Word classifier and adaptation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordModelConfig {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    /// Dropout rate after each hidden layer; 0 leaves dropout out.
    pub dropout: f64,
    /// Decay pulling LHUC vectors toward the identity scaling.
    pub lhuc_l2: f64,
    /// Each epoch visits every `frame_stride`-th frame from a random offset.
    pub frame_stride: usize,
    /// Block used for test-time LHUC re-estimation.
    pub adapt_block: String,
    pub adapt_epochs: usize,
    pub adapt_learning_rate: f64,
}

impl Default for WordModelConfig {
    fn default() -> Self {
        WordModelConfig {
            hidden_dim: 256,
            hidden_layers: 3,
            epochs: 15,
            batch_size: 256,
            learning_rate: 0.02,
            momentum: 0.9,
            l2: 0.0,
            dropout: 0.3,
            lhuc_l2: 0.05,
            frame_stride: 3,
            adapt_block: "B3".into(),
            adapt_epochs: 5,
            adapt_learning_rate: 0.02,
        }
    }
}

impl WordModelConfig {
    pub fn validate(&self) -> Result<()> {
        let f = |n: &str| format!("adapt.{n}");
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("hidden_layers", self.hidden_layers),
            ("epochs", self.epochs),
            ("frame_stride", self.frame_stride),
        ] {
            if v == 0 {
                return Err(Error::config(f(name), "must be at least 1"));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::config(f("batch_size"), "must be at least 2"));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("adapt_learning_rate", self.adapt_learning_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(f(name), "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(f("momentum"), format!("{} outside [0, 1)", self.momentum)));
        }
        for (name, v) in [("l2", self.l2), ("lhuc_l2", self.lhuc_l2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(f(name), "must be non-negative"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(f("dropout"), format!("{} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// FBank + delta frames of one utterance with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WordUtterance {
    pub meta: UtteranceMeta,
    pub word: usize,
    /// T×F frames.
    pub frames: Array2<f32>,
}

impl WordUtterance {
    /// Pairs FBank + delta frames with the word index from `vocab`.
    pub fn new(meta: UtteranceMeta, acoustic: &AcousticFeatures, vocab: &Vocabulary) -> Result<Self> {
        let word = vocab
            .word_index(&meta.word_id)
            .ok_or_else(|| Error::Data(format!("word {} is not in the vocabulary", meta.word_id)))?;
        Ok(WordUtterance {
            meta,
            word,
            frames: acoustic.values.mapv(|v| v as f32),
        })
    }
}

/// `hidden_layers` × (`Affine → ReLU → BN`), optionally LHUC-scaled after
/// one layer, then a softmax over the vocabulary.
pub fn word_model_spec(input_dim: usize, words: usize, cfg: &WordModelConfig, adapt: &AdaptationConfig) -> NetworkSpec {
    let h = cfg.hidden_dim;
    let mut trunk = Vec::new();
    let mut dim = input_dim;
    for layer in 0..cfg.hidden_layers {
        trunk.push(LayerSpec::Affine { in_dim: dim, out_dim: h });
        trunk.push(LayerSpec::Relu { dim: h });
        trunk.push(LayerSpec::BatchNorm { dim: h });
        if cfg.dropout > 0.0 {
            trunk.push(LayerSpec::Dropout { dim: h, rate: cfg.dropout });
        }
        if adapt.lhuc && layer == adapt.lhuc_layer {
            trunk.push(LayerSpec::Lhuc { dim: h, key: format!("hidden{layer}") });
        }
        dim = h;
    }
    NetworkSpec {
        input_dim,
        trunk,
        heads: vec![HeadSpec::softmax("word", h, words)],
    }
}

/// Streaming per-dimension mean and inverse standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FrameNorm {
    fn fit<'a>(blocks: impl Iterator<Item = (ArrayView2<'a, f32>, f64)>, dim: usize) -> Self {
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut n = 0.0;
        for (block, weight) in blocks {
            for row in block.rows() {
                for (k, &v) in row.iter().enumerate() {
                    let v = f64::from(v);
                    sum[k] += weight * v;
                    sq[k] += weight * v * v;
                }
                n += weight;
            }
        }
        let n = if n > 0.0 { n } else { 1.0 };
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-12 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        FrameNorm { mean, scale }
    }

    fn apply_row(&self, src: &[f32], dst: &mut [f32], offset: usize) {
        for (k, (d, &v)) in dst.iter_mut().zip(src).enumerate() {
            *d = ((f64::from(v) - self.mean[offset + k]) * self.scale[offset + k]) as f32;
        }
    }
}

/// A trained word classifier plus what it needs to build its inputs.
#[derive(Debug, Clone)]
pub struct WordModel {
    pub net: Network<f32>,
    pub adapt: AdaptationConfig,
    pub norm: FrameNorm,
    /// Auxiliary vector per speaker (empty when no embedding is used).
    pub aux: BTreeMap<String, Vec<f32>>,
    acoustic_dim: usize,
}

fn aux_table(adapt: &AdaptationConfig, embeddings: &[SpeakerEmbedding]) -> BTreeMap<String, Vec<f32>> {
    if adapt.aux_feature == AuxFeature::None {
        return BTreeMap::new();
    }
    embeddings
        .iter()
        .map(|e| {
            let v = if adapt.zero_embedding {
                vec![0.0; e.vector.len()]
            } else {
                e.vector.iter().map(|&x| x as f32).collect()
            };
            (e.speaker_id.clone(), v)
        })
        .collect()
}

impl WordModel {
    pub fn input_dim(&self) -> usize {
        self.net.spec().input_dim
    }

    fn aux_dim(&self) -> usize {
        self.input_dim() - self.acoustic_dim
    }

    fn aux_for(&self, speaker: &str) -> Result<&[f32]> {
        if self.aux_dim() == 0 {
            return Ok(&[]);
        }
        self.aux
            .get(speaker)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no speaker embedding for {speaker}")))
    }

    /// Fills `x` with normalised input rows for the given (utterance, frame) pairs.
    fn fill(&self, data: &[WordUtterance], picks: &[(usize, usize)], x: &mut Array2<f32>) -> Result<()> {
        let a = self.acoustic_dim;
        for (mut row, &(u, t)) in x.rows_mut().into_iter().zip(picks) {
            let utt = &data[u];
            let dst = row.as_slice_mut().expect("standard layout");
            let frame = utt.frames.row(t);
            self.norm.apply_row(frame.as_slice().expect("standard layout"), &mut dst[..a], 0);
            let aux = self.aux_for(&utt.meta.speaker_id)?;
            self.norm.apply_row(aux, &mut dst[a..], a);
        }
        Ok(())
    }

    fn run_epochs(
        &mut self,
        data: &[WordUtterance],
        epochs: usize,
        cfg: &WordModelConfig,
        sgd: &mut Sgd,
        mode: Mode,
        freeze: Freeze,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let mut last = f64::NAN;
        let dim = self.input_dim();
        for _ in 0..epochs {
            let mut picks: Vec<(usize, usize)> = Vec::new();
            for (u, utt) in data.iter().enumerate() {
                let start = rng.random_range(0..cfg.frame_stride);
                picks.extend((start..utt.frames.nrows()).step_by(cfg.frame_stride).map(|t| (u, t)));
            }
            picks.shuffle(rng);
            let mut sum = 0.0;
            let mut seen = 0;
            for chunk in picks.chunks(cfg.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                let mut x = Array2::zeros((chunk.len(), dim));
                self.fill(data, chunk, &mut x)?;
                let labels: Vec<usize> = chunk.iter().map(|&(u, _)| data[u].word).collect();
                let speakers: Vec<String> = chunk.iter().map(|&(u, _)| data[u].meta.speaker_id.clone()).collect();
                let batch = Batch::with_speakers(x.view(), &speakers);
                let masks = (mode == Mode::Train).then(|| self.net.sample_masks(chunk.len(), rng));
                let out = self.net.forward(&batch, mode, masks.as_ref())?;
                let loss = mtl_loss(&out.heads, &[&labels], &[1.0])?;
                if !loss.loss.is_finite() {
                    return Err(Error::Numeric("word model training diverged".into()));
                }
                let grads = self.net.backward(&out, &batch, &loss.logit_grads)?;
                self.net.update_running_stats(&out);
                sgd.step(&mut self.net, &grads, freeze)?;
                sum += loss.loss * chunk.len() as f64;
                seen += chunk.len();
            }
            last = sum / seen.max(1) as f64;
        }
        Ok(last)
    }

    /// Re-estimates only the LHUC vectors on `data` with every other
    /// parameter, including batch-norm statistics, frozen.
    pub fn adapt_lhuc(&mut self, data: &[WordUtterance], cfg: &WordModelConfig, seed: u64) -> Result<()> {
        if !self.adapt.lhuc {
            return Ok(());
        }
        let mut rng = seed::rng(seed, "word/adapt");
        let mut sgd = Sgd::new(cfg.adapt_learning_rate, cfg.momentum, 0.0)?.with_lhuc_l2(cfg.lhuc_l2)?;
        self.run_epochs(data, cfg.adapt_epochs, cfg, &mut sgd, Mode::Eval, Freeze::LhucOnly, &mut rng)?;
        Ok(())
    }

    /// Mean frame posterior per utterance (N×V).
    pub fn utterance_posteriors(&self, data: &[WordUtterance]) -> Result<Array2<f64>> {
        let words = self.net.spec().heads[0].classes();
        let mut out = Array2::zeros((data.len(), words));
        let dim = self.input_dim();
        for (i, utt) in data.iter().enumerate() {
            let t = utt.frames.nrows();
            if t == 0 {
                return Err(Error::Data(format!("utterance {}/{} has no frames", utt.meta.speaker_id, utt.meta.word_id)));
            }
            let picks: Vec<(usize, usize)> = (0..t).map(|f| (i, f)).collect();
            let mut x = Array2::zeros((t, dim));
            self.fill(data, &picks, &mut x)?;
            let speakers = vec![utt.meta.speaker_id.clone(); t];
            let res = self.net.predict(&Batch::with_speakers(x.view(), &speakers))?;
            let mean = res.heads[0].mean_axis(ndarray::Axis(0)).expect("non-empty");
            out.slice_mut(s![i, ..]).assign(&mean.mapv(f64::from));
        }
        Ok(out)
    }

    /// Argmax word per utterance.
    pub fn predict(&self, data: &[WordUtterance]) -> Result<Vec<usize>> {
        let p = self.utterance_posteriors(data)?;
        Ok(p.rows()
            .into_iter()
            .map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(k, _)| k))
            .collect())
    }
}

/// Trains a word classifier on `train`, with the speaker's embedding
/// appended to every frame when `adapt` asks for one and LHUC speaker
/// adaptive training when enabled.
pub fn train_adapted(
    train: &[WordUtterance],
    words: usize,
    adapt: &AdaptationConfig,
    embeddings: &[SpeakerEmbedding],
    cfg: &WordModelConfig,
    seed: u64,
) -> Result<WordModel> {
    cfg.validate()?;
    adapt.validate(cfg.hidden_layers)?;
    let first = train
        .first()
        .ok_or_else(|| Error::TrainingData("no training utterances".into()))?;
    let acoustic_dim = first.frames.ncols();
    if let Some(u) = train.iter().find(|u| u.frames.ncols() != acoustic_dim) {
        return Err(Error::Shape(format!(
            "utterance {}/{} has {} feature dims, expected {acoustic_dim}",
            u.meta.speaker_id,
            u.meta.word_id,
            u.frames.ncols()
        )));
    }
    if let Some(u) = train.iter().find(|u| u.word >= words) {
        return Err(Error::TrainingData(format!("word index {} outside vocabulary of {words}", u.word)));
    }
    let aux = aux_table(adapt, embeddings);
    let aux_dim = aux.values().next().map_or(0, Vec::len);
    if adapt.aux_feature != AuxFeature::None {
        if aux_dim == 0 {
            return Err(Error::Data("auxiliary feature requested but no embeddings supplied".into()));
        }
        if let Some(u) = train.iter().find(|u| !aux.contains_key(&u.meta.speaker_id)) {
            return Err(Error::Data(format!("no speaker embedding for {}", u.meta.speaker_id)));
        }
    }

    // frame statistics for the acoustic part; embedding statistics weighted
    // by each speaker's frame count
    let mut norm = FrameNorm::fit(train.iter().map(|u| (u.frames.view(), 1.0)), acoustic_dim);
    if aux_dim > 0 {
        let mut frames_per: BTreeMap<&str, f64> = BTreeMap::new();
        for u in train {
            *frames_per.entry(&u.meta.speaker_id).or_default() += u.frames.nrows() as f64;
        }
        let rows: Vec<(Array2<f32>, f64)> = frames_per
            .iter()
            .map(|(s, &n)| (Array2::from_shape_vec((1, aux_dim), aux[*s].clone()).expect("row"), n))
            .collect();
        let e = FrameNorm::fit(rows.iter().map(|(a, w)| (a.view(), *w)), aux_dim);
        norm.mean.extend(e.mean);
        norm.scale.extend(e.scale);
    }

    let init_seed = seed::derive(seed, "word/init");
    let spec = word_model_spec(acoustic_dim + aux_dim, words, cfg, adapt);
    let mut net = Network::<f32>::new(spec, init_seed)?;
    if aux_dim > 0 {
        // the acoustic columns start exactly where the baseline's do, so the
        // embedding columns are the only difference from it
        let base = Network::<f32>::new(word_model_spec(acoustic_dim, words, cfg, adapt), init_seed)?;
        let base_tensors = base.tensors();
        for (id, data) in net.tensors_mut() {
            if id.part != 0 || id.layer != 0 {
                continue;
            }
            if let Some((_, src)) = base_tensors.iter().find(|(b, _)| *b == id) {
                data[..src.len()].copy_from_slice(src);
            }
        }
    }
    if adapt.lhuc {
        let mut speakers: Vec<&str> = train.iter().map(|u| u.meta.speaker_id.as_str()).collect();
        speakers.sort_unstable();
        speakers.dedup();
        net.register_speakers(&speakers);
    }
    let mut model = WordModel {
        net,
        adapt: adapt.clone(),
        norm,
        aux,
        acoustic_dim,
    };
    let mut rng = seed::rng(seed, "word/train");
    let mut sgd = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.l2)?.with_lhuc_l2(cfg.lhuc_l2)?;
    let loss = model.run_epochs(train, cfg.epochs, cfg, &mut sgd, Mode::Train, Freeze::None, &mut rng)?;
    log::debug!("word model {}: final training loss {loss:.4}", adapt.name());
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Intelligibility;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(speakers: usize, words: usize, seed: u64) -> Vec<WordUtterance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in 0..speakers {
            for w in 0..words {
                let frames = Array2::from_shape_fn((6, 4), |(_, k)| {
                    (if k == w % 4 { 2.0 } else { 0.0 }) + rng.random_range(-0.3..0.3) + s as f32 * 0.1
                });
                out.push(WordUtterance {
                    meta: UtteranceMeta {
                        speaker_id: format!("S{s}"),
                        block_id: "B1".into(),
                        word_id: format!("W{w:02}"),
                        intelligibility: Intelligibility::M,
                    },
                    word: w,
                    frames,
                });
            }
        }
        out
    }

    fn small() -> WordModelConfig {
        WordModelConfig {
            hidden_dim: 16,
            hidden_layers: 2,
            dropout: 0.0,
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.05,
            frame_stride: 1,
            adapt_block: "B1".into(),
            ..Default::default()
        }
    }

    fn emb(n: usize) -> Vec<SpeakerEmbedding> {
        (0..n)
            .map(|s| SpeakerEmbedding {
                speaker_id: format!("S{s}"),
                vector: vec![s as f64, 1.0 - s as f64, 0.5],
                n_utterances: 4,
                intelligibility: Intelligibility::M,
            })
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for name in ["si", "sbe", "tbe", "sbe+tbe", "sbe-lhuc", "sbe-zero", "si-lhuc", "sbe+tbe-lhuc"] {
            let cfg: AdaptationConfig = name.parse().unwrap();
            assert_eq!(cfg.name(), name);
        }
        assert!("si-zero".parse::<AdaptationConfig>().is_err());
        assert!("xyz".parse::<AdaptationConfig>().is_err());
    }

    #[test]
    fn input_dims_follow_config() {
        let cfg = WordModelConfig::default();
        let si = word_model_spec(160, 20, &cfg, &AdaptationConfig::si());
        assert_eq!(si.input_dim, 160);
        let aux = word_model_spec(185, 20, &cfg, &AdaptationConfig::with_aux(AuxFeature::SBE));
        assert_eq!(aux.input_dim, 185);
        // same layer kinds as the baseline apart from the input width
        let kinds = |s: &NetworkSpec| s.trunk.iter().map(LayerSpec::kind).collect::<Vec<_>>();
        assert_eq!(kinds(&si), kinds(&aux));
    }

    #[test]
    fn learns_toy_words() {
        let data = toy(3, 4, 1);
        let m = train_adapted(&data, 4, &AdaptationConfig::si(), &[], &small(), 3).unwrap();
        let pred = m.predict(&data).unwrap();
        let acc = pred.iter().zip(&data).filter(|(p, u)| **p == u.word).count();
        assert_eq!(acc, data.len());
    }

    #[test]
    fn missing_embedding_is_a_data_error() {
        let data = toy(3, 4, 1);
        let cfg = AdaptationConfig::with_aux(AuxFeature::SBE);
        assert!(matches!(train_adapted(&data, 4, &cfg, &emb(2), &small(), 3), Err(Error::Data(_))));
        assert!(matches!(train_adapted(&data, 4, &cfg, &[], &small(), 3), Err(Error::Data(_))));
    }

    #[test]
    fn si_ignores_embeddings() {
        let data = toy(3, 4, 2);
        let a = train_adapted(&data, 4, &AdaptationConfig::si(), &[], &small(), 9).unwrap();
        let b = train_adapted(&data, 4, &AdaptationConfig::si(), &emb(3), &small(), 9).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.utterance_posteriors(&data).unwrap(), b.utterance_posteriors(&data).unwrap());
    }

    #[test]
    fn zeroed_embedding_matches_baseline() {
        let data = toy(3, 4, 4);
        let si = train_adapted(&data, 4, &AdaptationConfig::si(), &[], &small(), 6).unwrap();
        let zero = AdaptationConfig::with_aux(AuxFeature::SBE).zeroed();
        let z = train_adapted(&data, 4, &zero, &emb(3), &small(), 6).unwrap();
        assert_eq!(z.input_dim(), 7);
        assert_eq!(si.utterance_posteriors(&data).unwrap(), z.utterance_posteriors(&data).unwrap());
    }

    #[test]
    fn lhuc_adaptation_touches_only_lhuc() {
        let data = toy(3, 4, 3);
        let mut cfg = AdaptationConfig::with_aux(AuxFeature::SBE).with_lhuc();
        cfg.lhuc_layer = 1;
        let mut m = train_adapted(&data, 4, &cfg, &emb(3), &small(), 4).unwrap();
        let frozen = m.net.fingerprint(|id| !id.is_lhuc());
        let lhuc = m.net.fingerprint(|id| id.is_lhuc());
        m.adapt_lhuc(&data, &small(), 5).unwrap();
        assert_eq!(m.net.fingerprint(|id| !id.is_lhuc()), frozen);
        assert_ne!(m.net.fingerprint(|id| id.is_lhuc()), lhuc);
    }

    #[test]
    fn lhuc_layer_must_exist() {
        let mut cfg = AdaptationConfig::si().with_lhuc();
        assert!(cfg.validate(3).is_ok());
        cfg.lhuc_layer = 3;
        assert!(cfg.validate(3).is_err());
    }
}
