//! Formant-synthesised multi-speaker word corpus.
//!
//! Every word is a two-vowel sequence. The vowels form a family whose
//! formants are all scaled copies of one another, so a speaker's formant
//! shift and the vowel identity are confounded in any single frame. Severity
//! groups differ in spectral tilt, noise level, speaking rate and pause
//! insertion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{write_manifest, write_wav, Intelligibility, ManifestRow, SampleFormat, UtteranceMeta, Waveform};
use crate::error::{Error, Result};
use crate::seed;

pub const SAMPLE_RATE: u32 = 16_000;
/// Peak amplitude of every rendered signal.
pub const PEAK: f64 = 0.5;
pub const NEUTRAL_F0: f64 = 120.0;

const BASE_FORMANTS: [f64; 3] = [350.0, 1050.0, 2300.0];
const BANDWIDTHS: [f64; 3] = [60.0, 90.0, 150.0];
const EDGE_SILENCE_S: f64 = 0.03;
const RAMP_S: f64 = 0.015;
const VOWEL_S: f64 = 0.16;
const TRANSITION_S: f64 = 0.05;
const PAUSE_S: f64 = 0.12;
const TILT_REF_HZ: f64 = 500.0;
const TILT_MIN_HZ: f64 = 100.0;

/// How a synthetic speaker deviates from the neutral voice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeakerProfile {
    pub speaker_id: String,
    pub spectral_tilt_db_per_octave: f64,
    pub formant_shift_ratio: f64,
    pub rate_factor: f64,
    pub pause_insertion_prob: f64,
    /// Additive white noise level relative to the signal RMS; `None` is silent.
    pub noise_db: Option<f64>,
    pub f0_hz: f64,
    pub severity: Intelligibility,
}

impl SyntheticSpeakerProfile {
    /// A profile whose utterances equal their templates.
    pub fn identity(speaker_id: impl Into<String>) -> Self {
        SyntheticSpeakerProfile {
            speaker_id: speaker_id.into(),
            spectral_tilt_db_per_octave: 0.0,
            formant_shift_ratio: 1.0,
            rate_factor: 1.0,
            pause_insertion_prob: 0.0,
            noise_db: None,
            f0_hz: NEUTRAL_F0,
            severity: Intelligibility::CTL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("profile {}: {f}", self.speaker_id);
        if !(0.4..=1.5).contains(&self.rate_factor) {
            return Err(Error::config(field("rate_factor"), format!("{} outside [0.4, 1.5]", self.rate_factor)));
        }
        if !(0.8..=1.2).contains(&self.formant_shift_ratio) {
            return Err(Error::config(
                field("formant_shift_ratio"),
                format!("{} outside [0.8, 1.2]", self.formant_shift_ratio),
            ));
        }
        if !(0.0..=1.0).contains(&self.pause_insertion_prob) {
            return Err(Error::config(
                field("pause_insertion_prob"),
                format!("{} outside [0, 1]", self.pause_insertion_prob),
            ));
        }
        if !self.spectral_tilt_db_per_octave.is_finite() {
            return Err(Error::config(field("spectral_tilt_db_per_octave"), "must be finite"));
        }
        if self.noise_db.is_some_and(|n| !n.is_finite()) {
            return Err(Error::config(field("noise_db"), "must be finite when set"));
        }
        if !(40.0..=400.0).contains(&self.f0_hz) {
            return Err(Error::config(field("f0_hz"), format!("{} outside [40, 400]", self.f0_hz)));
        }
        Ok(())
    }
}

/// Which acoustic dimensions separate the severity groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusScheme {
    /// Tilt, noise, rate and pauses all vary by group.
    #[default]
    Full,
    /// Only tilt and noise vary; rate 1 and no pauses everywhere.
    SpectralOnly,
    /// Only rate and pauses vary; no tilt and a fixed noise level everywhere.
    RateOnly,
}

impl std::str::FromStr for CorpusScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CorpusScheme::Full),
            "spectral-only" | "spectral" => Ok(CorpusScheme::SpectralOnly),
            "rate-only" | "rate" => Ok(CorpusScheme::RateOnly),
            other => Err(Error::config("scheme", format!("unknown corpus scheme `{other}`"))),
        }
    }
}

/// Centre and half-width of a severity group's parameter bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityBand {
    pub rate: (f64, f64),
    pub tilt_db: (f64, f64),
    pub noise_db: (f64, f64),
    pub pause_prob: f64,
}

/// Parameter bands per group.
pub fn severity_band(group: Intelligibility) -> SeverityBand {
    match group {
        Intelligibility::CTL => SeverityBand {
            rate: (1.05, 0.04),
            tilt_db: (0.0, 0.0),
            noise_db: (-40.0, 1.5),
            pause_prob: 0.0,
        },
        Intelligibility::H => SeverityBand {
            rate: (0.9, 0.03),
            tilt_db: (-2.0, 0.4),
            noise_db: (-35.0, 1.5),
            pause_prob: 0.05,
        },
        Intelligibility::M => SeverityBand {
            rate: (0.75, 0.03),
            tilt_db: (-4.0, 0.4),
            noise_db: (-30.0, 1.5),
            pause_prob: 0.1,
        },
        Intelligibility::L => SeverityBand {
            rate: (0.6, 0.03),
            tilt_db: (-6.0, 0.4),
            noise_db: (-25.0, 1.5),
            pause_prob: 0.2,
        },
        Intelligibility::VL => SeverityBand {
            rate: (0.46, 0.03),
            tilt_db: (-8.0, 0.4),
            noise_db: (-20.0, 1.5),
            pause_prob: 0.3,
        },
    }
}

/// Shape of the generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Dysarthric speakers per group, in VL, L, M, H order.
    pub dysarthric_per_group: [usize; 4],
    pub control_speakers: usize,
    pub blocks: usize,
    pub vocab_size: usize,
    pub scheme: CorpusScheme,
    /// Formant ratio between consecutive vowels of the vowel family.
    pub vowel_step: f64,
    /// Range of speaker formant shift ratios.
    pub formant_shift: (f64, f64),
    /// Range of speaker F0 in Hz.
    pub f0_hz: (f64, f64),
    /// Scale of per-utterance jitter in formants, durations and F0; 0 disables it.
    pub variability: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            dysarthric_per_group: [4, 4, 4, 4],
            control_speakers: 13,
            blocks: 3,
            vocab_size: 20,
            scheme: CorpusScheme::Full,
            vowel_step: 1.15,
            formant_shift: (0.85, 1.15),
            f0_hz: (95.0, 210.0),
            variability: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::config("corpus.blocks", "must be at least 1"));
        }
        if self.vocab_size == 0 {
            return Err(Error::config("corpus.vocab_size", "vocabulary must be non-empty"));
        }
        let groups = self.dysarthric_per_group.iter().filter(|&&n| n > 0).count() + usize::from(self.control_speakers > 0);
        if groups < 2 {
            return Err(Error::config("corpus.dysarthric_per_group", "profiles must cover at least 2 severity groups"));
        }
        if !(self.vowel_step > 1.0 && self.vowel_step < 1.5) {
            return Err(Error::config("corpus.vowel_step", format!("{} outside (1, 1.5)", self.vowel_step)));
        }
        let (lo, hi) = self.formant_shift;
        if !(0.8 <= lo && lo <= hi && hi <= 1.2) {
            return Err(Error::config("corpus.formant_shift", format!("({lo}, {hi}) must lie within [0.8, 1.2]")));
        }
        let (lo, hi) = self.f0_hz;
        if !(40.0 <= lo && lo <= hi && hi <= 400.0) {
            return Err(Error::config("corpus.f0_hz", format!("({lo}, {hi}) must lie within [40, 400]")));
        }
        if !(0.0..=5.0).contains(&self.variability) {
            return Err(Error::config("corpus.variability", format!("{} outside [0, 5]", self.variability)));
        }
        let top = BASE_FORMANTS[2] * self.vowel_step.powi(self.vocabulary().vowels as i32 - 1) * self.formant_shift.1;
        if top >= 0.45 * f64::from(SAMPLE_RATE) {
            return Err(Error::config("corpus.vowel_step", "highest formant would exceed the band limit"));
        }
        Ok(())
    }

    pub fn speaker_count(&self) -> usize {
        self.dysarthric_per_group.iter().sum::<usize>() + self.control_speakers
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.vocab_size, self.vowel_step)
    }
}

/// Closed vocabulary of two-vowel words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub vowels: usize,
    pub vowel_step: f64,
    /// Vowel indices of each word, in spoken order.
    pub words: Vec<[usize; 2]>,
}

impl Vocabulary {
    /// The first `size` unordered vowel pairs of the smallest family that
    /// has enough of them, alternating spoken order.
    pub fn new(size: usize, vowel_step: f64) -> Self {
        let mut vowels = 2;
        while vowels * (vowels - 1) / 2 < size {
            vowels += 1;
        }
        let mut words = Vec::with_capacity(size);
        'outer: for i in 0..vowels {
            for j in i + 1..vowels {
                if words.len() == size {
                    break 'outer;
                }
                words.push(if words.len() % 2 == 0 { [i, j] } else { [j, i] });
            }
        }
        Vocabulary {
            vowels,
            vowel_step,
            words,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_id(index: usize) -> String {
        format!("W{:02}", index + 1)
    }

    /// Index of a word id produced by [`Vocabulary::word_id`].
    pub fn word_index(&self, id: &str) -> Option<usize> {
        let n: usize = id.strip_prefix('W')?.parse().ok()?;
        (1..=self.len()).contains(&n).then(|| n - 1)
    }

    pub fn formants(&self, vowel: usize) -> [f64; 3] {
        let k = self.vowel_step.powi(vowel as i32);
        BASE_FORMANTS.map(|f| f * k)
    }
}

/// Per-utterance random deviations from the speaker's nominal voice.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceVariation {
    /// Multiplicative jitter on each vowel's formants.
    pub formant_scale: [f64; 2],
    pub duration_scale: f64,
    pub f0_scale: f64,
    /// Whether a pause is inserted before the word and between its vowels.
    pub pauses: [bool; 2],
}

impl UtteranceVariation {
    pub fn none() -> Self {
        UtteranceVariation {
            formant_scale: [1.0; 2],
            duration_scale: 1.0,
            f0_scale: 1.0,
            pauses: [false; 2],
        }
    }

    pub fn sample(variability: f64, pause_prob: f64, rng: &mut impl Rng) -> Self {
        let mut jitter = |width: f64| 1.0 + variability * width * (2.0 * rng.random::<f64>() - 1.0);
        let formant_scale = [jitter(0.02), jitter(0.02)];
        let duration_scale = jitter(0.08);
        let f0_scale = jitter(0.04);
        let pauses = [rng.random::<f64>() < pause_prob, rng.random::<f64>() < pause_prob];
        UtteranceVariation {
            formant_scale,
            duration_scale,
            f0_scale,
            pauses,
        }
    }
}

/// Klatt-style second-order resonator.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, sr: f64) -> f64 {
        let c = -(-2.0 * PI * bw / sr).exp();
        let b = 2.0 * (-PI * bw / sr).exp() * (2.0 * PI * freq / sr).cos();
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn peak_normalise(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
}

fn secs(s: f64) -> usize {
    (s * f64::from(SAMPLE_RATE)).round() as usize
}

/// Renders one word: glottal pulses through three formant resonators, with
/// formants held on each vowel and interpolated across the transition.
///
/// `pauses[0]` inserts silence before the word, `pauses[1]` between vowels.
pub fn synthesize_word(
    vocab: &Vocabulary,
    word: usize,
    profile: &SyntheticSpeakerProfile,
    var: &UtteranceVariation,
) -> Vec<f64> {
    let sr = f64::from(SAMPLE_RATE);
    let stretch = var.duration_scale / profile.rate_factor;
    let [v1, v2] = vocab.words[word];
    let f_a = vocab.formants(v1).map(|f| f * profile.formant_shift_ratio * var.formant_scale[0]);
    let f_b = vocab.formants(v2).map(|f| f * profile.formant_shift_ratio * var.formant_scale[1]);
    let vowel = secs(VOWEL_S * stretch);
    let trans = secs(TRANSITION_S * stretch);
    let ramp = secs(RAMP_S * stretch).max(1);
    let voiced = 2 * vowel + trans;
    let f0 = profile.f0_hz * var.f0_scale;

    let mut res = [Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }];
    let mut phase = 0.0;
    let mut glottal = 0.0;
    let mut body = Vec::with_capacity(voiced);
    for n in 0..voiced {
        let mix = if n < vowel {
            0.0
        } else if n >= vowel + trans {
            1.0
        } else {
            (n - vowel) as f64 / trans as f64
        };
        // slight declination keeps the pitch contour from being flat
        let pitch = f0 * (1.0 - 0.08 * n as f64 / voiced as f64);
        phase += pitch / sr;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        // one-pole smoothing of the pulse train gives a falling source spectrum
        glottal = 0.9 * glottal + pulse;
        let mut y = glottal;
        for (k, r) in res.iter_mut().enumerate() {
            let f = f_a[k] * (1.0 - mix) + f_b[k] * mix;
            y = r.step(y, f, BANDWIDTHS[k], sr);
        }
        let env = if n < ramp {
            0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
        } else if n >= voiced - ramp {
            0.5 - 0.5 * (PI * (voiced - n) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        body.push(y * env);
    }

    let edge = secs(EDGE_SILENCE_S * stretch);
    let pause = secs(PAUSE_S * stretch);
    let mut out = vec![0.0; edge];
    if var.pauses[0] {
        out.resize(out.len() + pause, 0.0);
    }
    let cut = vowel + trans / 2;
    if var.pauses[1] {
        let fade = ramp.min(cut);
        let (head, tail) = body.split_at_mut(cut);
        let hl = head.len();
        for i in 0..fade {
            let g = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
            head[hl - 1 - i] *= g;
            tail[i] *= g;
        }
        out.extend_from_slice(head);
        out.resize(out.len() + pause, 0.0);
        out.extend_from_slice(tail);
    } else {
        out.extend_from_slice(&body);
    }
    out.resize(out.len() + edge, 0.0);
    out
}

/// Applies a spectral tilt of `db_per_octave` around 500 Hz via an FFT
/// magnitude filter. A zero tilt leaves the signal untouched.
pub fn apply_tilt(samples: &mut [f64], db_per_octave: f64, planner: &mut FftPlanner<f64>) {
    if db_per_octave == 0.0 || samples.is_empty() {
        return;
    }
    let n = samples.len();
    let sr = f64::from(SAMPLE_RATE);
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = (bin as f64 * sr / n as f64).max(TILT_MIN_HZ);
        let gain_db = db_per_octave * (f / TILT_REF_HZ).log2();
        *c *= 10f64.powf(gain_db / 20.0);
    }
    inv.process(&mut buf);
    for (s, c) in samples.iter_mut().zip(&buf) {
        *s = c.re / n as f64;
    }
}

/// Adds white Gaussian noise `noise_db` below the signal RMS.
pub fn add_noise(samples: &mut [f64], noise_db: f64, rng: &mut impl Rng) {
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / samples.len().max(1) as f64).sqrt();
    let sigma = rms * 10f64.powf(noise_db / 20.0);
    for s in samples.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *s += sigma * z;
    }
}

/// The word as spoken by the neutral voice with no variation.
pub fn template(vocab: &Vocabulary, word: usize) -> Vec<f64> {
    let mut s = synthesize_word(vocab, word, &SyntheticSpeakerProfile::identity("template"), &UtteranceVariation::none());
    peak_normalise(&mut s);
    s
}

/// Renders one utterance: synthesis at the speaker's voice, rate and pauses,
/// then tilt, noise and peak normalisation.
pub fn render_utterance(
    vocab: &Vocabulary,
    word: usize,
    profile: &SyntheticSpeakerProfile,
    var: &UtteranceVariation,
    rng: &mut impl Rng,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let mut s = synthesize_word(vocab, word, profile, var);
    apply_tilt(&mut s, profile.spectral_tilt_db_per_octave, planner);
    if let Some(db) = profile.noise_db {
        add_noise(&mut s, db, rng);
    }
    peak_normalise(&mut s);
    s
}

/// Draws speaker profiles: `D01..` for the dysarthric groups (VL, L, M, H
/// in order) and `C01..` for controls.
pub fn default_profiles(cfg: &CorpusConfig, seed: u64) -> Vec<SyntheticSpeakerProfile> {
    let mut rng = seed::rng(seed, "corpus/profiles");
    let groups = Intelligibility::DYSARTHRIC
        .iter()
        .zip(cfg.dysarthric_per_group)
        .flat_map(|(&g, n)| std::iter::repeat_n(g, n))
        .chain(std::iter::repeat_n(Intelligibility::CTL, cfg.control_speakers));
    let mut dys = 0;
    let mut ctl = 0;
    let uniform = |rng: &mut ChaCha8Rng, (c, h): (f64, f64)| c + h * (2.0 * rng.random::<f64>() - 1.0);
    let mut out = Vec::new();
    for g in groups {
        let id = if g.is_dysarthric() {
            dys += 1;
            format!("D{dys:02}")
        } else {
            ctl += 1;
            format!("C{ctl:02}")
        };
        let band = severity_band(g);
        let rate = uniform(&mut rng, band.rate);
        let tilt = uniform(&mut rng, band.tilt_db);
        let noise = uniform(&mut rng, band.noise_db);
        let (slo, shi) = cfg.formant_shift;
        let shift = slo + (shi - slo) * rng.random::<f64>();
        let (flo, fhi) = cfg.f0_hz;
        let f0 = flo + (fhi - flo) * rng.random::<f64>();
        let (rate, tilt, noise, pause) = match cfg.scheme {
            CorpusScheme::Full => (rate, tilt, noise, band.pause_prob),
            CorpusScheme::SpectralOnly => (1.0, tilt, noise, 0.0),
            CorpusScheme::RateOnly => (rate, 0.0, -40.0, band.pause_prob),
        };
        out.push(SyntheticSpeakerProfile {
            speaker_id: id,
            spectral_tilt_db_per_octave: tilt,
            formant_shift_ratio: shift,
            rate_factor: rate,
            pause_insertion_prob: pause,
            noise_db: Some(noise),
            f0_hz: f0,
            severity: g,
        });
    }
    out
}

/// One utterance of the corpus, renderable on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceSpec {
    pub meta: UtteranceMeta,
    pub speaker: usize,
    pub word: usize,
    pub block: usize,
    pub seed: u64,
}

impl UtteranceSpec {
    /// Relative WAV path used when the corpus is written to disk.
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(&self.meta.speaker_id).join(format!(
            "{}_{}_{}.wav",
            self.meta.speaker_id, self.meta.block_id, self.meta.word_id
        ))
    }
}

/// A synthetic corpus: profiles, vocabulary and the utterance list. Audio
/// is rendered lazily so large corpora need not be held in memory.
#[derive(Clone)]
pub struct SyntheticCorpus {
    pub profiles: Vec<SyntheticSpeakerProfile>,
    pub vocab: Vocabulary,
    pub utterances: Vec<UtteranceSpec>,
    variability: f64,
    planner: Arc<std::sync::Mutex<FftPlanner<f64>>>,
}

impl std::fmt::Debug for SyntheticCorpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticCorpus")
            .field("profiles", &self.profiles)
            .field("vocab", &self.vocab)
            .field("utterances", &self.utterances.len())
            .field("variability", &self.variability)
            .finish()
    }
}

pub fn block_id(block: usize) -> String {
    format!("B{}", block + 1)
}

/// Lays out `n_per_word` blocks, each holding every word once per speaker.
pub fn generate_corpus(
    profiles: Vec<SyntheticSpeakerProfile>,
    vocab: Vocabulary,
    n_per_word: usize,
    variability: f64,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if vocab.is_empty() {
        return Err(Error::param("vocab", "vocabulary must be non-empty"));
    }
    for p in &profiles {
        p.validate()?;
    }
    let mut groups: Vec<Intelligibility> = profiles.iter().map(|p| p.severity).collect();
    groups.sort_by_key(|g| g.index());
    groups.dedup();
    if groups.len() < 2 {
        return Err(Error::param("profiles", "profiles must cover at least 2 severity groups"));
    }
    let mut utterances = Vec::with_capacity(profiles.len() * n_per_word * vocab.len());
    for (s, p) in profiles.iter().enumerate() {
        for block in 0..n_per_word {
            for word in 0..vocab.len() {
                let meta = UtteranceMeta {
                    speaker_id: p.speaker_id.clone(),
                    block_id: block_id(block),
                    word_id: Vocabulary::word_id(word),
                    intelligibility: p.severity,
                };
                let name = format!("utt/{}/{}/{}", p.speaker_id, block, word);
                utterances.push(UtteranceSpec {
                    meta,
                    speaker: s,
                    word,
                    block,
                    seed: seed::derive(seed, &name),
                });
            }
        }
    }
    Ok(SyntheticCorpus {
        profiles,
        vocab,
        utterances,
        variability,
        planner: Arc::new(std::sync::Mutex::new(FftPlanner::new())),
    })
}

impl SyntheticCorpus {
    /// Builds profiles and layout from a corpus configuration.
    pub fn from_config(cfg: &CorpusConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        generate_corpus(default_profiles(cfg, seed), cfg.vocabulary(), cfg.blocks, cfg.variability, seed)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn render(&self, utt: &UtteranceSpec) -> Waveform {
        let profile = &self.profiles[utt.speaker];
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(utt.seed);
        let var = UtteranceVariation::sample(self.variability, profile.pause_insertion_prob, &mut rng);
        let mut planner = self.planner.lock().unwrap_or_else(|e| e.into_inner());
        let samples = render_utterance(&self.vocab, utt.word, profile, &var, &mut rng, &mut planner);
        Waveform::new(samples, SAMPLE_RATE, utt.relative_path().to_string_lossy())
    }

    /// Writes every utterance as 16-bit WAV plus `manifest.csv` and
    /// `profiles.json` into `out_dir`; returns the manifest rows.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<ManifestRow>> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let mut rows = Vec::with_capacity(self.len());
        for utt in &self.utterances {
            let rel = utt.relative_path();
            let path = out_dir.join(&rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_wav(&path, &self.render(utt), SampleFormat::Pcm16)?;
            rows.push(ManifestRow {
                path: rel,
                speaker_id: utt.meta.speaker_id.clone(),
                block_id: utt.meta.block_id.clone(),
                word_id: utt.meta.word_id.clone(),
                intelligibility: utt.meta.intelligibility,
            });
        }
        write_manifest(out_dir.join("manifest.csv"), &rows)?;
        let json = serde_json::to_string_pretty(&self.profiles)?;
        let p = out_dir.join("profiles.json");
        std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn vocab() -> Vocabulary {
        Vocabulary::new(20, 1.15)
    }

    fn centroid(x: &[f64]) -> f64 {
        let n = x.len().next_power_of_two();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&s| Complex::new(s, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (mut num, mut den) = (0.0, 0.0);
        for (k, c) in buf[..n / 2].iter().enumerate() {
            num += k as f64 * c.norm();
            den += c.norm();
        }
        num / den
    }

    #[test]
    fn vocabulary_shape() {
        let v = vocab();
        assert_eq!(v.len(), 20);
        assert_eq!(v.vowels, 7);
        let mut pairs: Vec<[usize; 2]> = v.words.iter().map(|&[a, b]| [a.min(b), a.max(b)]).collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 20);
        assert_eq!(v.word_index("W07"), Some(6));
        assert_eq!(v.word_index("W21"), None);
    }

    #[test]
    fn identity_profile_reproduces_template() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut planner = FftPlanner::new();
        for w in [0, 7, 19] {
            let u = render_utterance(
                &v,
                w,
                &SyntheticSpeakerProfile::identity("x"),
                &UtteranceVariation::none(),
                &mut rng,
                &mut planner,
            );
            assert_eq!(u, template(&v, w));
        }
    }

    #[test]
    fn half_rate_doubles_duration() {
        let v = vocab();
        let t = template(&v, 3);
        let mut p = SyntheticSpeakerProfile::identity("x");
        p.rate_factor = 0.5;
        let u = synthesize_word(&v, 3, &p, &UtteranceVariation::none());
        let frame = secs(0.01) as isize;
        assert!((u.len() as isize - 2 * t.len() as isize).abs() <= frame, "{} vs {}", u.len(), t.len());
    }

    #[test]
    fn negative_tilt_lowers_centroid() {
        let v = vocab();
        let mut planner = FftPlanner::new();
        for w in 0..v.len() {
            let t = template(&v, w);
            let mut tilted = t.clone();
            apply_tilt(&mut tilted, -6.0, &mut planner);
            assert!(centroid(&tilted) < centroid(&t));
        }
    }

    #[test]
    fn pauses_lengthen() {
        let v = vocab();
        let p = SyntheticSpeakerProfile::identity("x");
        let mut var = UtteranceVariation::none();
        let plain = synthesize_word(&v, 2, &p, &var);
        var.pauses = [true, true];
        let paused = synthesize_word(&v, 2, &p, &var);
        assert_eq!(paused.len(), plain.len() + 2 * secs(PAUSE_S));
    }

    #[test]
    fn default_corpus_shape_and_determinism() {
        let cfg = CorpusConfig::default();
        let a = SyntheticCorpus::from_config(&cfg, 5).unwrap();
        assert_eq!(a.profiles.len(), 29);
        assert_eq!(a.profiles.iter().filter(|p| p.severity.is_dysarthric()).count(), 16);
        assert_eq!(a.len(), 29 * 3 * 20);
        let b = SyntheticCorpus::from_config(&cfg, 5).unwrap();
        assert_eq!(a.profiles, b.profiles);
        let u = &a.utterances[123];
        assert_eq!(a.render(u), b.render(u));
        for p in &a.profiles {
            p.validate().unwrap();
        }
    }

    #[test]
    fn schemes_hold_other_dimensions_fixed() {
        let mut cfg = CorpusConfig {
            scheme: CorpusScheme::SpectralOnly,
            ..Default::default()
        };
        let s = default_profiles(&cfg, 1);
        assert!(s.iter().all(|p| p.rate_factor == 1.0 && p.pause_insertion_prob == 0.0));
        cfg.scheme = CorpusScheme::RateOnly;
        let r = default_profiles(&cfg, 1);
        assert!(r.iter().all(|p| p.spectral_tilt_db_per_octave == 0.0 && p.noise_db == Some(-40.0)));
    }

    #[test]
    fn rejects_degenerate_configs() {
        let cfg = CorpusConfig {
            dysarthric_per_group: [0, 0, 0, 0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let mut p = SyntheticSpeakerProfile::identity("x");
        p.rate_factor = 0.3;
        assert!(p.validate().is_err());
    }
}
