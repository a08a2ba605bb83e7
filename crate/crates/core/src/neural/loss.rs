use ndarray::{Array2, ArrayView2};

use super::network::Batch;
use super::Scalar;
use crate::error::{Error, Result};

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Inputs and per-head labels for one multi-task step.
#[derive(Debug, Clone)]
pub struct MtlBatch<'a, F> {
    pub inputs: ArrayView2<'a, F>,
    /// One label vector per head, each as long as the batch.
    pub labels: Vec<&'a [usize]>,
    /// Task weights, one per head, summing to 1.
    pub weights: Vec<f64>,
    pub speakers: Option<&'a [String]>,
}

impl<'a, F> MtlBatch<'a, F> {
    pub fn batch(&self) -> Batch<'a, F> {
        Batch {
            x: self.inputs,
            speakers: self.speakers,
        }
    }

    pub fn validate(&self, heads: usize) -> Result<()> {
        let rows = self.inputs.nrows();
        if rows == 0 {
            return Err(Error::TrainingData("empty batch".into()));
        }
        if self.labels.len() != heads || self.weights.len() != heads {
            return Err(Error::Shape(format!(
                "{} label sets and {} weights for {heads} heads",
                self.labels.len(),
                self.weights.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|l| l.len() != rows) {
            return Err(Error::Shape(format!("{} labels for {rows} rows", l.len())));
        }
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::param("weights", format!("{:?} must be in [0, 1] and sum to 1", self.weights)));
        }
        Ok(())
    }
}

/// Weighted cross-entropy and its gradients with respect to head logits.
#[derive(Debug, Clone)]
pub struct LossOutput<F> {
    pub loss: f64,
    pub per_head: Vec<f64>,
    /// `w · (p - y) / B` per head; `None` where the weight is zero.
    pub logit_grads: Vec<Option<Array2<F>>>,
}

/// Multi-task loss `Σ_h w_h · mean_b(-ln p_h[b, y_b])` over head probabilities.
pub fn mtl_loss<F: Scalar>(probs: &[Array2<F>], labels: &[&[usize]], weights: &[f64]) -> Result<LossOutput<F>> {
    if probs.len() != labels.len() || probs.len() != weights.len() {
        return Err(Error::Shape("heads, labels and weights differ in number".into()));
    }
    let mut loss = 0.0;
    let mut per_head = Vec::with_capacity(probs.len());
    let mut logit_grads = Vec::with_capacity(probs.len());
    for ((p, y), &w) in probs.iter().zip(labels).zip(weights) {
        let rows = p.nrows();
        if y.len() != rows || rows == 0 {
            return Err(Error::Shape(format!("{} labels for {rows} rows", y.len())));
        }
        let classes = p.ncols();
        if let Some(bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::TrainingData(format!("label {bad} outside {classes} classes")));
        }
        let ce = y
            .iter()
            .enumerate()
            .map(|(b, &c)| -p[[b, c]].f64().max(LOG_FLOOR).ln())
            .sum::<f64>()
            / rows as f64;
        per_head.push(ce);
        loss += w * ce;
        logit_grads.push((w != 0.0).then(|| {
            let scale = F::of(w / rows as f64);
            let mut g = p.mapv(|v| v * scale);
            for (b, &c) in y.iter().enumerate() {
                g[[b, c]] = g[[b, c]] - scale;
            }
            g
        }));
    }
    Ok(LossOutput {
        loss,
        per_head,
        logit_grads,
    })
}
