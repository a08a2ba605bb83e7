//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use subbasis_core::adapt::{
    run_benchmark, AdaptationConfig, AuxFeature, EmbeddingSets, SyntheticCorpus, WordUtterance,
};
use subbasis_core::audio::{load_wav, read_manifest, ManifestRow};
use subbasis_core::classifier::{
    assess as assess_features, classifier_grad_check, extract_embeddings, save_embeddings, train_classifier,
    write_reports_csv, AssessmentMode, AssessmentReport, LabelConfig, TrainedClassifier,
};
use subbasis_core::features::{extract_feature, load_feature_set, save_feature_set};
use subbasis_core::neural::{layer_suite, GradCheckOptions, GradCheckReport};
use subbasis_core::parallel::par_map;
use subbasis_core::spectrogram::{fbank_delta, mel_spectrogram};
use subbasis_core::subspace::{InputConfig, UtteranceFeature};
use subbasis_core::{Error, PipelineConfig};

/// Raised for invalid command-line input that is not a configuration file
/// problem; exits with the same code as configuration errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 for configuration and usage errors, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(Error::Config { .. } | Error::Parameter { .. }) = cause.downcast_ref::<Error>() {
            return 2;
        }
    }
    1
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Blocks to use: the explicit list, or every block but the test block
/// (`exclude_test`) or only the test block.
fn select_blocks<'a>(
    features: &'a [UtteranceFeature],
    blocks: &[String],
    test_block: &str,
    exclude_test: bool,
) -> Result<Vec<&'a UtteranceFeature>> {
    let keep = |b: &str| {
        if blocks.is_empty() {
            (b == test_block) != exclude_test
        } else {
            blocks.iter().any(|x| x == b)
        }
    };
    let out: Vec<&UtteranceFeature> = features.iter().filter(|f| keep(&f.meta.block_id)).collect();
    if out.is_empty() {
        return Err(usage(format!(
            "no utterances in the selected blocks ({})",
            if blocks.is_empty() { format!("test block {test_block}") } else { blocks.join(",") }
        )));
    }
    Ok(out)
}

pub fn gen_corpus(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let corpus = SyntheticCorpus::from_config(&cfg.corpus, cfg.seed)?;
    let rows = corpus.write(out).with_context(|| format!("writing corpus to {}", out.display()))?;
    log::info!(
        "wrote {} utterances from {} speakers to {}",
        rows.len(),
        corpus.profiles.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SkippedRow {
    path: PathBuf,
    error: String,
}

#[derive(Debug, Serialize)]
struct ExtractSummary {
    manifest: PathBuf,
    total: usize,
    extracted: usize,
    skipped: usize,
    padded: usize,
    feature_dim: usize,
    skipped_rows: Vec<SkippedRow>,
}

pub const SUMMARY_FILE: &str = "summary.json";

pub fn extract(cfg: &PipelineConfig, manifest: &Path, out: &Path, workers: usize) -> Result<()> {
    let rows = read_manifest(manifest)?;
    let base = manifest_dir(manifest);
    let results = par_map(&rows, workers, |row: &ManifestRow| -> subbasis_core::Result<UtteranceFeature> {
        let w = load_wav(row.resolve(&base))?;
        extract_feature(&w, &cfg.front_end, &cfg.subspace, row.meta())
    });
    let mut features = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    for (row, r) in rows.iter().zip(results) {
        match r {
            Ok(f) => features.push(f),
            Err(e) => {
                log::warn!("skipping {}: {e}", row.path.display());
                skipped.push(SkippedRow {
                    path: row.path.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    save_feature_set(out, &features, cfg.subspace, cfg.front_end.mel_channels)?;
    let summary = ExtractSummary {
        manifest: manifest.to_path_buf(),
        total: rows.len(),
        extracted: features.len(),
        skipped: skipped.len(),
        padded: features.iter().filter(|f| f.padded).count(),
        feature_dim: cfg.subspace.feature_len(cfg.front_end.mel_channels),
        skipped_rows: skipped,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    log::info!("extracted {} of {} utterances", summary.extracted, summary.total);
    // more than 1% of rows skipped is a failed run
    if summary.skipped * 100 > summary.total {
        bail!("{} of {} manifest rows could not be processed", summary.skipped, summary.total);
    }
    Ok(())
}

pub fn train(
    cfg: &PipelineConfig,
    features: &Path,
    input: InputConfig,
    labels: Option<LabelConfig>,
    blocks: &[String],
    out: &Path,
) -> Result<()> {
    let (_, feats) = load_feature_set(features)?;
    let selected: Vec<UtteranceFeature> = select_blocks(&feats, blocks, &cfg.benchmark.test_block, true)?
        .into_iter()
        .cloned()
        .collect();
    let mut ccfg = cfg.classifier.clone();
    if let Some(l) = labels {
        ccfg.labels = l;
    }
    let clf = train_classifier(&selected, input, &ccfg, cfg.seed)?;
    clf.save(out)?;
    log::info!(
        "trained {} classifier on {} utterances; best epoch {}",
        input.as_str(),
        selected.len(),
        clf.meta.best_epoch
    );
    write_json(&with_suffix(out, ".history.json"), &clf.meta.history)
}

/// Loads a classifier and checks that a feature set can feed it.
fn load_compatible(model: &Path, features: &Path) -> Result<(TrainedClassifier, Vec<UtteranceFeature>)> {
    let clf = TrainedClassifier::load(model)?;
    let (index, feats) = load_feature_set(features)?;
    let have = clf.meta.input.input_dim(&index.subspace, index.mel_channels);
    let want = clf.meta.standardizer.mean.len();
    if have != want {
        return Err(Error::config(
            "features",
            format!(
                "{} features of this set have {have} dims but the classifier expects {want}",
                clf.meta.input.as_str()
            ),
        )
        .into());
    }
    Ok((clf, feats))
}

pub fn assess(
    cfg: &PipelineConfig,
    model: &Path,
    features: &Path,
    blocks: &[String],
    modes: &[AssessmentMode],
    out: &Path,
) -> Result<()> {
    let (clf, feats) = load_compatible(model, features)?;
    let selected: Vec<UtteranceFeature> = select_blocks(&feats, blocks, &cfg.benchmark.test_block, false)?
        .into_iter()
        .cloned()
        .collect();
    let reports: Vec<AssessmentReport> = modes
        .iter()
        .map(|&m| assess_features(&clf, &selected, m))
        .collect::<subbasis_core::Result<_>>()?;
    let csv_path = with_suffix(out, ".csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_reports_csv(file, &reports)?;
    write_json(&with_suffix(out, ".json"), &reports)?;
    for r in &reports {
        log::info!("{} {}: overall {:.2}%", r.input_config.as_str(), r.mode.as_str(), r.overall);
    }
    Ok(())
}

pub fn embed(cfg: &PipelineConfig, model: &Path, features: &Path, blocks: &[String], out: &Path) -> Result<()> {
    let (clf, feats) = load_compatible(model, features)?;
    let selected: Vec<UtteranceFeature> = select_blocks(&feats, blocks, &cfg.benchmark.test_block, true)?
        .into_iter()
        .cloned()
        .collect();
    let emb = extract_embeddings(&clf, &selected)?;
    save_embeddings(out, &emb)?;
    log::info!(
        "wrote {} speaker embeddings of dimension {}",
        emb.len(),
        emb.first().map_or(0, |e| e.vector.len())
    );
    Ok(())
}

fn parse_aux(kind: &str) -> Result<AuxFeature> {
    match kind.to_ascii_lowercase().as_str() {
        "sbe" => Ok(AuxFeature::SBE),
        "tbe" => Ok(AuxFeature::TBE),
        "sbe+tbe" | "sbetbe" => Ok(AuxFeature::SBETBE),
        other => Err(usage(format!("unknown embedding kind `{other}`; expected sbe, tbe or sbe+tbe"))),
    }
}

/// FBank + delta frames for every manifest row, with words indexed in
/// sorted order of their ids.
fn word_utterances(cfg: &PipelineConfig, manifest: &Path, workers: usize) -> Result<(Vec<WordUtterance>, usize)> {
    let rows = read_manifest(manifest)?;
    let base = manifest_dir(manifest);
    let vocab: Vec<&str> = rows
        .iter()
        .map(|r| r.word_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let frames = par_map(&rows, workers, |row: &ManifestRow| -> subbasis_core::Result<WordUtterance> {
        let w = load_wav(row.resolve(&base))?;
        let mel = mel_spectrogram(&w, &cfg.front_end)?;
        let word = vocab.binary_search(&row.word_id.as_str()).expect("word collected above");
        Ok(WordUtterance {
            meta: row.meta(),
            word,
            frames: fbank_delta(&mel).values.mapv(|v| v as f32),
        })
    });
    let data = frames
        .into_iter()
        .zip(&rows)
        .map(|(r, row)| r.with_context(|| format!("reading {}", row.path.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok((data, vocab.len()))
}

#[allow(clippy::too_many_arguments)]
pub fn benchmark(
    cfg: &PipelineConfig,
    manifest: &Path,
    embeddings: &[String],
    configs: &[AdaptationConfig],
    lhuc_layer: Option<usize>,
    out: &Path,
    workers: usize,
) -> Result<()> {
    let mut sets = EmbeddingSets::new();
    for spec in embeddings {
        let (kind, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--embeddings expects KIND=PATH, got `{spec}`")))?;
        let kind = parse_aux(kind)?;
        let emb = subbasis_core::classifier::load_embeddings(Path::new(path))?;
        sets.insert(kind, emb);
    }
    let systems: Vec<AdaptationConfig> = configs
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if let Some(l) = lhuc_layer {
                c.lhuc_layer = l;
            }
            c
        })
        .collect();
    for s in &systems {
        if s.aux_feature != AuxFeature::None && !sets.contains_key(&s.aux_feature) {
            return Err(usage(format!(
                "system {} needs --embeddings {}=PATH",
                s.name(),
                s.aux_feature.as_str().to_ascii_lowercase()
            )));
        }
    }
    let (data, words) = word_utterances(cfg, manifest, workers)?;
    let result = run_benchmark(&data, words, &sets, &systems, &cfg.adapt, &cfg.benchmark)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("benchmark.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    result.write_csv(file)?;
    write_json(&out.join("benchmark.json"), &result)?;
    for s in &result.systems {
        log::info!("{}: {:.2}% word error", s.name, s.avg);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradCheckEntry {
    network: String,
    max_rel_error: f64,
    worst_tensor: Option<String>,
    tensors: usize,
}

fn entry(network: String, r: &GradCheckReport) -> GradCheckEntry {
    GradCheckEntry {
        network,
        max_rel_error: r.max_rel_error(),
        worst_tensor: r.worst().map(|t| t.id.to_string()),
        tensors: r.tensors.len(),
    }
}

pub fn grad_check(cfg: &PipelineConfig, tolerance: f64, out: Option<&Path>) -> Result<()> {
    if !(tolerance > 0.0) {
        return Err(usage("--tolerance must be positive"));
    }
    let mut entries: Vec<GradCheckEntry> = layer_suite(cfg.seed)?
        .into_iter()
        .map(|(name, r)| entry(format!("layer kinds ({name})"), &r))
        .collect();
    let input_dim = InputConfig::SBTB.input_dim(&cfg.subspace, cfg.front_end.mel_channels);
    let speakers = cfg.corpus.speaker_count();
    let opts = GradCheckOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let r = classifier_grad_check(input_dim, speakers, &cfg.classifier, &opts)?;
    entries.push(entry("classifier".into(), &r));
    let mut failed = 0;
    for e in &entries {
        let ok = e.max_rel_error <= tolerance;
        failed += usize::from(!ok);
        println!(
            "{} {}: max relative error {:.3e} over {} tensors{}",
            if ok { "ok  " } else { "FAIL" },
            e.network,
            e.max_rel_error,
            e.tensors,
            e.worst_tensor.as_ref().map_or(String::new(), |t| format!(" (worst {t})"))
        );
    }
    if let Some(path) = out {
        write_json(path, &entries)?;
    }
    if failed > 0 {
        bail!("{failed} gradient checks exceeded tolerance {tolerance:e}");
    }
    Ok(())
}
