use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{mtl_loss, MtlBatch};
use super::network::{DropoutMasks, Mode, Network, TensorId};
use super::spec::{HeadSpec, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

/// Largest batch accepted by [`grad_check`].
pub const MAX_BATCH: usize = 8;

/// Settings for a finite-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Coordinates sampled per tensor (all of them when the tensor is smaller).
    pub max_coords: usize,
    /// Denominator floor for the relative error, so gradients that are zero
    /// up to rounding are compared absolutely.
    pub floor: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: 50,
            floor: 1e-7,
            mode: Mode::Train,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub id: TensorId,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_rel_error))
    }

    /// The tensor with the largest relative error.
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn loss(net: &Network<f64>, batch: &MtlBatch<'_, f64>, mode: Mode, masks: Option<&DropoutMasks<f64>>) -> Result<f64> {
    let out = net.forward(&batch.batch(), mode, masks)?;
    Ok(mtl_loss(&out.heads, &batch.labels, &batch.weights)?.loss)
}

/// Compares backpropagated gradients with central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε` on sampled coordinates of every trainable tensor.
///
/// Dropout, if any, uses the fixed `masks` so the loss is a deterministic
/// function of the parameters.
pub fn grad_check(
    net: &Network<f64>,
    batch: &MtlBatch<'_, f64>,
    masks: Option<&DropoutMasks<f64>>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if batch.inputs.nrows() > MAX_BATCH {
        return Err(Error::param(
            "batch",
            format!("gradient checks take at most {MAX_BATCH} rows, got {}", batch.inputs.nrows()),
        ));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    batch.validate(net.spec().heads.len())?;
    let b = batch.batch();
    let out = net.forward(&b, opts.mode, masks)?;
    let l = mtl_loss(&out.heads, &batch.labels, &batch.weights)?;
    let grads = net.backward(&out, &b, &l.logit_grads)?;
    let analytic: Vec<(TensorId, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(id, d)| (id, d.to_vec()))
        .collect();

    let mut work = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tensors = Vec::with_capacity(analytic.len());
    for (t, (id, a)) in analytic.iter().enumerate() {
        let n = a.len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            sample(&mut rng, n, opts.max_coords).into_vec()
        };
        let mut check = TensorCheck {
            id: id.clone(),
            checked: coords.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for k in coords {
            let orig = work.tensors()[t].1[k];
            work.tensors_mut()[t].1[k] = orig + opts.eps;
            let up = loss(&work, batch, opts.mode, masks)?;
            work.tensors_mut()[t].1[k] = orig - opts.eps;
            let down = loss(&work, batch, opts.mode, masks)?;
            work.tensors_mut()[t].1[k] = orig;
            let numeric = (up - down) / (2.0 * opts.eps);
            let abs = (a[k] - numeric).abs();
            let rel = abs / a[k].abs().max(numeric.abs()).max(opts.floor);
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_rel_error = check.max_rel_error.max(rel);
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tensors })
}

fn uniform_inputs(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Checks a small network holding every layer kind, LHUC included, in
/// Train mode with fixed dropout masks, Train mode without dropout, and
/// Eval mode. Returns one named report per mode.
pub fn layer_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let spec = NetworkSpec {
        input_dim: 6,
        trunk: vec![
            LayerSpec::Affine { in_dim: 6, out_dim: 10 },
            LayerSpec::Relu { dim: 10 },
            LayerSpec::BatchNorm { dim: 10 },
            LayerSpec::Dropout { dim: 10, rate: 0.3 },
            LayerSpec::Projection { in_dim: 10, out_dim: 4 },
            LayerSpec::Affine { in_dim: 4, out_dim: 10 },
            LayerSpec::Lhuc { dim: 10, key: "h".into() },
            LayerSpec::Skip { dim: 10, source: 3 },
        ],
        heads: vec![HeadSpec::softmax("a", 10, 3), HeadSpec::softmax("b", 10, 4)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(spec, seed)?;
    net.register_speakers(&["s1", "s2"]);
    for s in ["s1", "s2"] {
        if let Some(r) = net.lhuc_vector_mut("h", s) {
            r.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
    }
    let x = uniform_inputs(MAX_BATCH, 6, &mut rng);
    let y1: Vec<usize> = (0..MAX_BATCH).map(|i| i % 3).collect();
    let y2: Vec<usize> = (0..MAX_BATCH).map(|i| (i * 5 + 3) % 4).collect();
    let spk: Vec<String> = (0..MAX_BATCH).map(|i| format!("s{}", 1 + i % 2)).collect();
    let batch = MtlBatch {
        inputs: x.view(),
        labels: vec![&y1, &y2],
        weights: vec![0.5, 0.5],
        speakers: Some(&spk),
    };
    let masks = net.sample_masks(MAX_BATCH, &mut rng);
    let runs = [
        ("train, frozen dropout masks", Mode::Train, Some(&masks)),
        ("train, no dropout", Mode::Train, None),
        ("eval", Mode::Eval, None),
    ];
    let mut out = Vec::new();
    for (name, mode, m) in runs {
        let opts = GradCheckOptions {
            mode,
            seed,
            ..Default::default()
        };
        out.push((name.to_string(), grad_check(&net, &batch, m, &opts)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn logistic_regression_is_exact() {
        let spec = NetworkSpec {
            input_dim: 5,
            trunk: vec![],
            heads: vec![HeadSpec::softmax("h", 5, 3)],
        };
        let net = Network::new(spec, 4).unwrap();
        let x = inputs(6, 5, 1);
        let y = [0usize, 1, 2, 2, 1, 0];
        let batch = MtlBatch {
            inputs: x.view(),
            labels: vec![&y],
            weights: vec![1.0],
            speakers: None,
        };
        let r = grad_check(&net, &batch, None, &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error() <= 1e-7, "{:?}", r.worst());
    }

    #[test]
    fn every_layer_kind_passes() {
        let suite = layer_suite(5).unwrap();
        assert_eq!(suite.len(), 3);
        for (name, r) in &suite {
            assert!(r.max_rel_error() <= 1e-4, "{name}: {:?}", r.worst());
            assert!(r.tensors.iter().any(|t| t.id.is_lhuc()));
        }
    }

    #[test]
    fn rejects_large_batches() {
        let spec = NetworkSpec {
            input_dim: 2,
            trunk: vec![],
            heads: vec![HeadSpec::softmax("h", 2, 2)],
        };
        let net = Network::new(spec, 0).unwrap();
        let x = inputs(9, 2, 0);
        let y = [0usize; 9];
        let batch = MtlBatch {
            inputs: x.view(),
            labels: vec![&y],
            weights: vec![1.0],
            speakers: None,
        };
        assert!(grad_check(&net, &batch, None, &GradCheckOptions::default()).is_err());
    }
}
