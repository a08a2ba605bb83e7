use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::train::{LabelConfig, TrainedClassifier};
use crate::audio::Intelligibility;
use crate::error::{Error, Result};
use crate::subspace::{InputConfig, UtteranceFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AssessmentMode {
    #[default]
    FiveWay,
    /// Dysarthric groups collapse to one class against controls.
    Binary,
}

impl AssessmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AssessmentMode::FiveWay => "5-way",
            AssessmentMode::Binary => "binary",
        }
    }
}

impl std::str::FromStr for AssessmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "5-way" | "five-way" | "fiveway" | "5" => Ok(AssessmentMode::FiveWay),
            "binary" | "2-way" => Ok(AssessmentMode::Binary),
            other => Err(Error::config("mode", format!("unknown assessment mode `{other}`"))),
        }
    }
}

/// Utterance-level accuracy grouped by true intelligibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    /// Percent correct per group; groups absent from the test set are omitted.
    pub per_group: BTreeMap<Intelligibility, f64>,
    pub counts: BTreeMap<Intelligibility, usize>,
    /// Utterance-weighted accuracy over the four dysarthric groups.
    pub dys_avg: f64,
    pub ctl: f64,
    pub overall: f64,
    pub mode: AssessmentMode,
    pub input_config: InputConfig,
    pub label_config: LabelConfig,
}

fn correct(pred: Intelligibility, truth: Intelligibility, mode: AssessmentMode) -> bool {
    match mode {
        AssessmentMode::FiveWay => pred == truth,
        AssessmentMode::Binary => pred.is_dysarthric() == truth.is_dysarthric(),
    }
}

fn pct(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

/// Scores predictions against ground truth.
pub fn assess_predictions(
    predicted: &[Intelligibility],
    truth: &[Intelligibility],
    mode: AssessmentMode,
    input_config: InputConfig,
    label_config: LabelConfig,
) -> Result<AssessmentReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} utterances", predicted.len(), truth.len())));
    }
    let mut hits: BTreeMap<Intelligibility, usize> = BTreeMap::new();
    let mut counts: BTreeMap<Intelligibility, usize> = BTreeMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *counts.entry(t).or_default() += 1;
        *hits.entry(t).or_default() += usize::from(correct(p, t, mode));
    }
    let per_group = counts.iter().map(|(&g, &n)| (g, pct(hits[&g], n))).collect();
    let sum = |f: &dyn Fn(Intelligibility) -> bool| {
        counts
            .iter()
            .filter(|(g, _)| f(**g))
            .fold((0, 0), |(h, n), (g, c)| (h + hits[g], n + c))
    };
    let (dh, dn) = sum(&|g| g.is_dysarthric());
    let (ch, cn) = sum(&|g| !g.is_dysarthric());
    Ok(AssessmentReport {
        per_group,
        counts,
        dys_avg: pct(dh, dn),
        ctl: pct(ch, cn),
        overall: pct(dh + ch, dn + cn),
        mode,
        input_config,
        label_config,
    })
}

/// Classifies `features` and scores them.
pub fn assess(clf: &TrainedClassifier, features: &[UtteranceFeature], mode: AssessmentMode) -> Result<AssessmentReport> {
    let predicted = clf.predict(features)?;
    let truth: Vec<Intelligibility> = features.iter().map(|f| f.meta.intelligibility).collect();
    assess_predictions(&predicted, &truth, mode, clf.meta.input, clf.meta.labels)
}

pub const REPORT_COLUMNS: [&str; 9] = ["input", "labels", "mode", "VL", "L", "M", "H", "DYS-avg", "CTL"];

/// Writes reports as a table with one row per configuration and columns
/// `input,labels,mode,VL,L,M,H,DYS-avg,CTL,overall`.
pub fn write_reports_csv<W: Write>(w: W, reports: &[AssessmentReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Data(format!("CSV write failed: {e}"));
    let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
    header.push("overall");
    out.write_record(&header).map_err(err)?;
    for r in reports {
        let cell = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.2}"));
        let mut rec = vec![
            r.input_config.as_str().to_string(),
            r.label_config.as_str().to_string(),
            r.mode.as_str().to_string(),
        ];
        for g in Intelligibility::DYSARTHRIC {
            rec.push(cell(r.per_group.get(&g).copied()));
        }
        rec.push(cell(Some(r.dys_avg)));
        rec.push(cell(r.per_group.get(&Intelligibility::CTL).copied()));
        rec.push(cell(Some(r.overall)));
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| Error::Data(format!("CSV write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Intelligibility::*;

    #[test]
    fn perfect_predictions_score_100() {
        let truth: Vec<Intelligibility> = Intelligibility::ALL.iter().cycle().take(50).copied().collect();
        for mode in [AssessmentMode::FiveWay, AssessmentMode::Binary] {
            let r = assess_predictions(&truth, &truth, mode, InputConfig::SBTB, LabelConfig::IntelSpkr).unwrap();
            assert!(r.per_group.values().all(|&v| v == 100.0));
            assert_eq!((r.dys_avg, r.ctl, r.overall), (100.0, 100.0, 100.0));
        }
    }

    #[test]
    fn binary_collapses_dysarthric_groups() {
        let truth = [VL, L, M, H, CTL];
        let pred = [H, VL, L, M, CTL];
        let five = assess_predictions(&pred, &truth, AssessmentMode::FiveWay, InputConfig::SB, LabelConfig::IntelOnly).unwrap();
        let bin = assess_predictions(&pred, &truth, AssessmentMode::Binary, InputConfig::SB, LabelConfig::IntelOnly).unwrap();
        assert_eq!(five.overall, 20.0);
        assert_eq!(bin.overall, 100.0);
    }

    #[test]
    fn overall_is_utterance_weighted() {
        let truth = [VL, VL, VL, CTL];
        let pred = [VL, VL, VL, H];
        let r = assess_predictions(&pred, &truth, AssessmentMode::FiveWay, InputConfig::SB, LabelConfig::IntelOnly).unwrap();
        assert_eq!(r.overall, 75.0);
        assert_eq!(r.dys_avg, 100.0);
        assert_eq!(r.ctl, 0.0);
    }

    #[test]
    fn random_predictor_near_chance() {
        let truth: Vec<Intelligibility> = Intelligibility::ALL.iter().cycle().take(1000).copied().collect();
        let mut mean = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pred: Vec<Intelligibility> = (0..truth.len())
                .map(|_| Intelligibility::from_index(rng.random_range(0..5)).unwrap())
                .collect();
            let r = assess_predictions(&pred, &truth, AssessmentMode::FiveWay, InputConfig::SB, LabelConfig::IntelOnly).unwrap();
            // binomial sd at n=1000 is 1.26 points; 3 points is about 2.4 sd
            assert!((r.overall - 20.0).abs() <= 4.0, "seed {seed}: {}", r.overall);
            mean += r.overall / 10.0;
        }
        assert!((mean - 20.0).abs() <= 3.0, "{mean}");
    }

    #[test]
    fn csv_layout() {
        let truth = [VL, CTL];
        let r = assess_predictions(&truth, &truth, AssessmentMode::FiveWay, InputConfig::SBTB, LabelConfig::IntelSpkr).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "input,labels,mode,VL,L,M,H,DYS-avg,CTL,overall");
        assert_eq!(lines.next().unwrap(), "SB+TB,Intel+SpkrID,5-way,100.00,,,,100.00,100.00,100.00");
    }
}
