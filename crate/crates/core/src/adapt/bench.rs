use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::model::{train_adapted, AdaptationConfig, AuxFeature, WordModelConfig, WordUtterance};
use crate::audio::Intelligibility;
use crate::classifier::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::parallel::par_map;

/// Exact two-sided McNemar test on paired correctness vectors.
///
/// Counts the discordant pairs `b` (only `a` correct) and `c` (only `b`
/// correct) and returns `min(1, 2 P[X <= min(b, c)])` with
/// `X ~ Binomial(b + c, 1/2)`. With no discordant pairs the p-value is 1.
pub fn mcnemar(a: &[bool], b: &[bool]) -> Result<McNemar> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let only_a = a.iter().zip(b).filter(|(x, y)| **x && !**y).count() as u64;
    let only_b = a.iter().zip(b).filter(|(x, y)| !**x && **y).count() as u64;
    Ok(McNemar {
        only_a,
        only_b,
        p_value: mcnemar_p(only_a, only_b),
    })
}

/// Two-sided exact p-value from discordant counts.
pub fn mcnemar_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    (2.0 * dist.cdf(b.min(c))).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub only_a: u64,
    pub only_b: u64,
    pub p_value: f64,
}

/// Embeddings per auxiliary feature kind.
pub type EmbeddingSets = BTreeMap<AuxFeature, Vec<SpeakerEmbedding>>;

/// Data split and repetition settings of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub test_block: String,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            test_block: "B2".into(),
            seeds: vec![1, 2, 3, 4, 5],
            workers: 1,
        }
    }
}

/// Word error rates of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub config: AdaptationConfig,
    pub name: String,
    /// Mean over seeds of the per-group word error rate (percent).
    pub per_group: BTreeMap<Intelligibility, f64>,
    /// Mean over seeds of the error rate over all dysarthric test words.
    pub avg: f64,
    pub per_seed_avg: Vec<f64>,
    /// McNemar test against the baseline, pooled over seeds.
    pub versus_baseline: Option<McNemar>,
    /// Per seed, per test utterance correctness.
    #[serde(skip)]
    pub correct: Vec<Vec<bool>>,
}

/// Outcome of comparing several systems on the same split and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub baseline: String,
    pub seeds: Vec<u64>,
    pub test_block: String,
    pub adapt_block: String,
    pub test_utterances: usize,
    pub systems: Vec<SystemResult>,
}

impl BenchmarkResult {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.name == name)
    }

    /// Pooled McNemar test between two systems.
    pub fn compare(&self, a: &str, b: &str) -> Result<McNemar> {
        let get = |n: &str| {
            self.system(n)
                .ok_or_else(|| Error::config("configs", format!("system `{n}` was not run")))
        };
        let (a, b) = (get(a)?, get(b)?);
        mcnemar(&a.correct.concat(), &b.correct.concat())
    }

    /// Table with columns `config,VL,L,M,H,Avg,p-value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let err = |e: csv::Error| Error::Data(format!("CSV write failed: {e}"));
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["config", "VL", "L", "M", "H", "Avg", "p-value"]).map_err(err)?;
        for s in &self.systems {
            let mut rec = vec![s.name.clone()];
            for g in Intelligibility::DYSARTHRIC {
                rec.push(s.per_group.get(&g).map_or_else(String::new, |v| format!("{v:.2}")));
            }
            rec.push(format!("{:.2}", s.avg));
            rec.push(s.versus_baseline.map_or_else(String::new, |m| format!("{:.4}", m.p_value)));
            out.write_record(&rec).map_err(err)?;
        }
        out.flush().map_err(|e| Error::Data(format!("CSV write failed: {e}")))
    }
}

fn error_rates(test: &[&WordUtterance], correct: &[bool]) -> (BTreeMap<Intelligibility, f64>, f64) {
    let mut tally: BTreeMap<Intelligibility, (usize, usize)> = BTreeMap::new();
    for (u, &ok) in test.iter().zip(correct) {
        let e = tally.entry(u.meta.intelligibility).or_default();
        e.0 += usize::from(!ok);
        e.1 += 1;
    }
    let rate = |(wrong, n): (usize, usize)| 100.0 * wrong as f64 / n.max(1) as f64;
    let all = tally.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (tally.into_iter().map(|(g, t)| (g, rate(t))).collect(), rate(all))
}

/// Trains and tests every system in `systems` once per seed.
///
/// Training uses every utterance outside the test block. Systems with
/// LHUC then re-estimate the speaker transforms on the adaptation block
/// before scoring dysarthric test-block words. The first system is the
/// baseline for significance tests.
pub fn run_benchmark(
    data: &[WordUtterance],
    words: usize,
    embeddings: &EmbeddingSets,
    systems: &[AdaptationConfig],
    model: &WordModelConfig,
    bench: &BenchmarkConfig,
) -> Result<BenchmarkResult> {
    model.validate()?;
    if systems.is_empty() {
        return Err(Error::config("configs", "no systems to compare"));
    }
    if bench.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    if model.adapt_block == bench.test_block {
        return Err(Error::config("adapt.adapt_block", "must differ from the test block"));
    }
    for s in systems {
        s.validate(model.hidden_layers)?;
        if s.aux_feature != AuxFeature::None && !embeddings.contains_key(&s.aux_feature) {
            return Err(Error::Data(format!("no {} embeddings for system {}", s.aux_feature.as_str(), s.name())));
        }
    }
    let train: Vec<WordUtterance> = data.iter().filter(|u| u.meta.block_id != bench.test_block).cloned().collect();
    let adapt: Vec<WordUtterance> = data
        .iter()
        .filter(|u| u.meta.block_id == model.adapt_block && u.meta.intelligibility.is_dysarthric())
        .cloned()
        .collect();
    let test_refs: Vec<&WordUtterance> = data
        .iter()
        .filter(|u| u.meta.block_id == bench.test_block && u.meta.intelligibility.is_dysarthric())
        .collect();
    let test: Vec<WordUtterance> = test_refs.iter().map(|u| (*u).clone()).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::TrainingData(format!(
            "split on block {} leaves {} training and {} test utterances",
            bench.test_block,
            train.len(),
            test.len()
        )));
    }

    let jobs: Vec<(usize, u64)> = (0..systems.len())
        .flat_map(|s| bench.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let empty = Vec::new();
    let outcomes = par_map(&jobs, bench.workers.max(1), |&(s, seed)| -> Result<Vec<bool>> {
        let sys = &systems[s];
        let emb = embeddings.get(&sys.aux_feature).unwrap_or(&empty);
        let mut m = train_adapted(&train, words, sys, emb, model, seed)?;
        if sys.lhuc {
            m.adapt_lhuc(&adapt, model, seed)?;
        }
        let pred = m.predict(&test)?;
        let correct: Vec<bool> = pred.iter().zip(&test).map(|(p, u)| *p == u.word).collect();
        log::info!(
            "{} seed {seed}: {:.2}% word error",
            sys.name(),
            100.0 * correct.iter().filter(|c| !**c).count() as f64 / correct.len() as f64
        );
        Ok(correct)
    });
    let mut outcomes = outcomes.into_iter();

    let n_seeds = bench.seeds.len() as f64;
    let mut results: Vec<SystemResult> = Vec::new();
    for sys in systems {
        let correct: Vec<Vec<bool>> = outcomes.by_ref().take(bench.seeds.len()).collect::<Result<_>>()?;
        let mut per_group: BTreeMap<Intelligibility, f64> = BTreeMap::new();
        let mut per_seed_avg = Vec::new();
        for c in &correct {
            let (groups, avg) = error_rates(&test_refs, c);
            for (g, v) in groups {
                *per_group.entry(g).or_default() += v / n_seeds;
            }
            per_seed_avg.push(avg);
        }
        let avg = per_seed_avg.iter().sum::<f64>() / n_seeds;
        let versus_baseline = match results.first() {
            Some(base) => Some(mcnemar(&base.correct.concat(), &correct.concat())?),
            None => None,
        };
        results.push(SystemResult {
            config: sys.clone(),
            name: sys.name(),
            per_group,
            avg,
            per_seed_avg,
            versus_baseline,
            correct,
        });
    }
    Ok(BenchmarkResult {
        baseline: results[0].name.clone(),
        seeds: bench.seeds.clone(),
        test_block: bench.test_block.clone(),
        adapt_block: model.adapt_block.clone(),
        test_utterances: test.len(),
        systems: results,
    })
}
