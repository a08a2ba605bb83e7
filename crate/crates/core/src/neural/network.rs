use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, NetworkSpec};
use super::Scalar;
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Rows of network input plus, for LHUC layers, the speaker of each row.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, F> {
    pub x: ArrayView2<'a, F>,
    pub speakers: Option<&'a [String]>,
}

impl<'a, F> Batch<'a, F> {
    pub fn new(x: ArrayView2<'a, F>) -> Self {
        Batch { x, speakers: None }
    }

    pub fn with_speakers(x: ArrayView2<'a, F>, speakers: &'a [String]) -> Self {
        Batch {
            x,
            speakers: Some(speakers),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Params<F> {
    None,
    Affine {
        w: Array2<F>,
        b: Array1<F>,
    },
    Projection {
        w: Array2<F>,
    },
    BatchNorm {
        gamma: Array1<F>,
        beta: Array1<F>,
        running_mean: Array1<F>,
        running_var: Array1<F>,
    },
    Lhuc {
        r: BTreeMap<String, Array1<F>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Grad<F> {
    None,
    Affine { w: Array2<F>, b: Array1<F> },
    Projection { w: Array2<F> },
    BatchNorm { gamma: Array1<F>, beta: Array1<F> },
    Lhuc { r: BTreeMap<String, Array1<F>> },
}

/// Identifies one tensor of a network, e.g. `trunk.3.w` or `trunk.9.lhuc[S01]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorId {
    pub part: usize,
    pub layer: usize,
    pub name: String,
}

impl TensorId {
    fn new(part: usize, layer: usize, name: impl Into<String>) -> Self {
        TensorId {
            part,
            layer,
            name: name.into(),
        }
    }

    pub fn is_lhuc(&self) -> bool {
        self.name.starts_with("lhuc[")
    }
}

impl fmt::Display for TensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.part == 0 {
            write!(f, "trunk.{}.{}", self.layer, self.name)
        } else {
            write!(f, "head{}.{}.{}", self.part - 1, self.layer, self.name)
        }
    }
}

/// Per-layer dropout keep masks (already scaled by `1 / (1 - rate)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<F> {
    parts: Vec<Vec<Option<Array2<F>>>>,
}

enum Aux<F> {
    None,
    Bn { xhat: Array2<F>, inv_std: Array1<F>, stats: Option<(Array1<F>, Array1<F>)> },
    Lhuc { amp: Array2<F> },
    Mask(Array2<F>),
}

struct PartCache<F> {
    /// `inputs[i]` is the input of layer `i`; `output` is the last layer's output.
    inputs: Vec<Array2<F>>,
    output: Array2<F>,
    aux: Vec<Aux<F>>,
}

impl<F: Clone> PartCache<F> {
    fn output_of(&self, layer: usize) -> &Array2<F> {
        self.inputs.get(layer + 1).unwrap_or(&self.output)
    }
}

/// Result of a forward pass: the trunk (bottleneck) output and each head's
/// probabilities, plus whatever backpropagation needs.
pub struct ForwardOutput<F> {
    pub trunk: Array2<F>,
    pub heads: Vec<Array2<F>>,
    mode: Mode,
    cache: Vec<PartCache<F>>,
}

/// Gradients of every trainable tensor, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    parts: Vec<Vec<Grad<F>>>,
}

/// Feed-forward network: parameters for a validated [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    spec: NetworkSpec,
    parts: Vec<Vec<Params<F>>>,
}

fn layer_seed(seed: u64, part: usize, layer: usize) -> u64 {
    crate::seed::derive(seed, &format!("layer/{part}/{layer}"))
}

fn uniform_matrix<F: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || F::of(rng.random_range(-bound..bound)))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// LHUC amplitude `2σ(r)`, in (0, 2).
pub fn lhuc_amplitude<F: Scalar>(r: ArrayView1<'_, F>) -> Array1<F> {
    r.mapv(|v| F::of(2.0 * sigmoid(v.f64())))
}

/// Scales every row of `h` by the LHUC amplitude of `r`.
pub fn lhuc_scale<F: Scalar>(h: ArrayView2<'_, F>, r: ArrayView1<'_, F>) -> Result<Array2<F>> {
    if r.len() != h.ncols() {
        return Err(Error::Shape(format!("LHUC vector of {} for {} units", r.len(), h.ncols())));
    }
    let amp = lhuc_amplitude(r);
    Ok(&h * &amp)
}

fn params_for<F: Scalar>(layer: &LayerSpec, rng: &mut ChaCha8Rng) -> Params<F> {
    match *layer {
        LayerSpec::Affine { in_dim, out_dim } => {
            let bound = 1.0 / (in_dim as f64).sqrt();
            let w = uniform_matrix(rng, in_dim, out_dim, bound);
            let b = Array1::from_shape_simple_fn(out_dim, || F::of(rng.random_range(-bound..bound)));
            Params::Affine { w, b }
        }
        LayerSpec::Projection { in_dim, out_dim } => Params::Projection {
            w: uniform_matrix(rng, in_dim, out_dim, 1.0 / (in_dim as f64).sqrt()),
        },
        LayerSpec::BatchNorm { dim } => Params::BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
        },
        LayerSpec::Lhuc { .. } => Params::Lhuc { r: BTreeMap::new() },
        _ => Params::None,
    }
}

impl<F: Scalar> Network<F> {
    /// Builds a network with seeded uniform `±1/sqrt(fan_in)` weights. Each
    /// layer draws from its own stream, so widening one layer's input leaves
    /// the other layers' initial weights untouched.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let stacks: Vec<&[LayerSpec]> = std::iter::once(spec.trunk.as_slice())
            .chain(spec.heads.iter().map(|h| h.layers.as_slice()))
            .collect();
        let parts = stacks
            .iter()
            .enumerate()
            .map(|(p, layers)| {
                layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, p, i));
                        params_for(l, &mut rng)
                    })
                    .collect()
            })
            .collect();
        Ok(Network { spec, parts })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn layers(&self, part: usize) -> &[LayerSpec] {
        if part == 0 {
            &self.spec.trunk
        } else {
            &self.spec.heads[part - 1].layers
        }
    }

    /// Adds zero (identity) LHUC vectors for speakers not yet known.
    pub fn register_speakers<S: AsRef<str>>(&mut self, speakers: &[S]) {
        for (p, part) in self.parts.iter_mut().enumerate() {
            for (i, params) in part.iter_mut().enumerate() {
                if let Params::Lhuc { r } = params {
                    let dim = if p == 0 {
                        self.spec.trunk[i].in_dim()
                    } else {
                        self.spec.heads[p - 1].layers[i].in_dim()
                    };
                    for s in speakers {
                        r.entry(s.as_ref().to_string())
                            .or_insert_with(|| Array1::zeros(dim));
                    }
                }
            }
        }
    }

    /// Speakers with LHUC vectors, in key order.
    pub fn lhuc_speakers(&self) -> Vec<String> {
        self.parts
            .iter()
            .flatten()
            .find_map(|p| match p {
                Params::Lhuc { r } => Some(r.keys().cloned().collect()),
                _ => None,
            })
            .unwrap_or_default()
    }

    /// LHUC vector of `speaker` in the layer keyed `key`.
    pub fn lhuc_vector(&self, key: &str, speaker: &str) -> Option<&Array1<F>> {
        for (p, part) in self.parts.iter().enumerate() {
            for (i, params) in part.iter().enumerate() {
                if let (LayerSpec::Lhuc { key: k, .. }, Params::Lhuc { r }) = (&self.layers(p)[i], params) {
                    if k == key {
                        return r.get(speaker);
                    }
                }
            }
        }
        None
    }

    pub fn lhuc_vector_mut(&mut self, key: &str, speaker: &str) -> Option<&mut Array1<F>> {
        let mut pos = None;
        for p in 0..self.parts.len() {
            for (i, l) in self.layers(p).iter().enumerate() {
                if matches!(l, LayerSpec::Lhuc { key: k, .. } if k == key) {
                    pos = Some((p, i));
                }
            }
        }
        let (p, i) = pos?;
        match &mut self.parts[p][i] {
            Params::Lhuc { r } => r.get_mut(speaker),
            _ => None,
        }
    }

    /// Samples dropout keep masks for a batch of `rows`.
    pub fn sample_masks(&self, rows: usize, rng: &mut impl Rng) -> DropoutMasks<F> {
        let parts = (0..self.parts.len())
            .map(|p| {
                self.layers(p)
                    .iter()
                    .map(|l| match *l {
                        LayerSpec::Dropout { dim, rate } if rate > 0.0 => {
                            let keep = F::of(1.0 / (1.0 - rate));
                            Some(Array2::from_shape_simple_fn((rows, dim), || {
                                if rng.random::<f64>() < rate {
                                    F::zero()
                                } else {
                                    keep
                                }
                            }))
                        }
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        DropoutMasks { parts }
    }

    /// Forward pass keeping the activations needed by [`Network::backward`].
    ///
    /// In `Train` mode batch normalisation uses batch statistics and dropout
    /// applies `masks` (no masks: dropout disabled). In `Eval` mode running
    /// statistics are used and dropout is the identity.
    pub fn forward(
        &self,
        batch: &Batch<'_, F>,
        mode: Mode,
        masks: Option<&DropoutMasks<F>>,
    ) -> Result<ForwardOutput<F>> {
        self.run(batch, mode, masks, true)
    }

    /// Evaluation-mode inference without caching.
    pub fn predict(&self, batch: &Batch<'_, F>) -> Result<ForwardOutput<F>> {
        self.run(batch, Mode::Eval, None, false)
    }

    fn run(
        &self,
        batch: &Batch<'_, F>,
        mode: Mode,
        masks: Option<&DropoutMasks<F>>,
        keep: bool,
    ) -> Result<ForwardOutput<F>> {
        if batch.x.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, batch has {}",
                self.spec.input_dim,
                batch.x.ncols()
            )));
        }
        if let Some(s) = batch.speakers {
            if s.len() != batch.x.nrows() {
                return Err(Error::Shape(format!(
                    "{} speaker labels for {} rows",
                    s.len(),
                    batch.x.nrows()
                )));
            }
        }
        let mut cache = Vec::with_capacity(self.parts.len());
        let trunk = self.run_part(0, batch.x.to_owned(), batch, mode, masks, keep, &mut cache);
        let mut heads = Vec::with_capacity(self.parts.len() - 1);
        for p in 1..self.parts.len() {
            let probs = self.run_part(p, trunk.clone(), batch, mode, masks, keep, &mut cache);
            if probs.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite output in head `{}`",
                    self.spec.heads[p - 1].name
                )));
            }
            heads.push(probs);
        }
        Ok(ForwardOutput {
            trunk,
            heads,
            mode,
            cache,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_part(
        &self,
        p: usize,
        mut x: Array2<F>,
        batch: &Batch<'_, F>,
        mode: Mode,
        masks: Option<&DropoutMasks<F>>,
        keep: bool,
        cache: &mut Vec<PartCache<F>>,
    ) -> Array2<F> {
        let layers = self.layers(p);
        let mut inputs: Vec<Array2<F>> = Vec::new();
        let mut aux = Vec::new();
        // outputs of skip sources when not caching everything
        let mut kept: BTreeMap<usize, Array2<F>> = BTreeMap::new();
        let sources: Vec<usize> = layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Skip { source, .. } => Some(*source),
                _ => None,
            })
            .collect();
        let rows = x.nrows();
        for (i, (layer, params)) in layers.iter().zip(&self.parts[p]).enumerate() {
            let input = x;
            let mut a = Aux::None;
            let out = match (layer, params) {
                (LayerSpec::Affine { .. }, Params::Affine { w, b }) => {
                    let mut y = input.dot(w);
                    y += b;
                    y
                }
                (LayerSpec::Projection { .. }, Params::Projection { w }) => input.dot(w),
                (LayerSpec::Relu { .. }, _) => input.mapv(|v| v.max(F::zero())),
                (
                    LayerSpec::BatchNorm { .. },
                    Params::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let eps = F::of(BN_EPSILON);
                    let (mean, var, stats) = if mode == Mode::Train {
                        let mean = input.mean_axis(Axis(0)).expect("non-empty batch");
                        let var = input.var_axis(Axis(0), F::zero());
                        let unbiased = if rows > 1 {
                            var.mapv(|v| v * F::of(rows as f64 / (rows - 1) as f64))
                        } else {
                            var.clone()
                        };
                        (mean.clone(), var, Some((mean, unbiased)))
                    } else {
                        (running_mean.clone(), running_var.clone(), None)
                    };
                    let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
                    let xhat = (&input - &mean) * &inv_std;
                    let y = &xhat * gamma + beta;
                    if keep {
                        a = Aux::Bn { xhat, inv_std, stats };
                    } else if let Some(st) = stats {
                        a = Aux::Bn {
                            xhat: Array2::zeros((0, 0)),
                            inv_std,
                            stats: Some(st),
                        };
                    }
                    y
                }
                (LayerSpec::Dropout { .. }, _) => match (mode, masks.and_then(|m| m.parts[p][i].as_ref())) {
                    (Mode::Train, Some(mask)) => {
                        let y = &input * mask;
                        if keep {
                            a = Aux::Mask(mask.clone());
                        }
                        y
                    }
                    _ => input.clone(),
                },
                (LayerSpec::Skip { source, .. }, _) => {
                    let src = if !keep {
                        &kept[source]
                    } else if *source + 1 < i {
                        &inputs[*source + 1]
                    } else {
                        &input
                    };
                    &input + src
                }
                (LayerSpec::Softmax { .. }, _) => {
                    let mut y = input.clone();
                    for mut row in y.rows_mut() {
                        let m = row.fold(F::neg_infinity(), |m, &v| m.max(v));
                        row.mapv_inplace(|v| (v - m).exp());
                        let s = row.sum();
                        row.mapv_inplace(|v| v / s);
                    }
                    y
                }
                (LayerSpec::Lhuc { dim, .. }, Params::Lhuc { r }) => {
                    let mut amp = Array2::<F>::ones((rows, *dim));
                    if let Some(speakers) = batch.speakers {
                        let mut cached: BTreeMap<&str, Array1<F>> = BTreeMap::new();
                        for (mut row, s) in amp.rows_mut().into_iter().zip(speakers) {
                            if let Some(v) = r.get(s.as_str()) {
                                let a = cached
                                    .entry(s.as_str())
                                    .or_insert_with(|| lhuc_amplitude(v.view()));
                                row.assign(a);
                            }
                        }
                    }
                    let y = &input * &amp;
                    if keep {
                        a = Aux::Lhuc { amp };
                    }
                    y
                }
                _ => unreachable!("parameters always match their layer kind"),
            };
            if !keep && sources.contains(&i) {
                kept.insert(i, out.clone());
            }
            if keep {
                inputs.push(input);
                aux.push(a);
            } else if let Aux::Bn { .. } = a {
                aux.push(a);
            } else {
                aux.push(Aux::None);
            }
            x = out;
        }
        if keep || mode == Mode::Train {
            cache.push(PartCache {
                inputs,
                output: if keep { x.clone() } else { Array2::zeros((0, 0)) },
                aux,
            });
        }
        x
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// mean/variance of every batch-norm layer.
    pub fn update_running_stats(&mut self, out: &ForwardOutput<F>) {
        if out.mode != Mode::Train {
            return;
        }
        let m = F::of(BN_MOMENTUM);
        let one_minus = F::one() - m;
        for (part, pc) in self.parts.iter_mut().zip(&out.cache) {
            for (params, aux) in part.iter_mut().zip(&pc.aux) {
                if let (
                    Params::BatchNorm {
                        running_mean,
                        running_var,
                        ..
                    },
                    Aux::Bn {
                        stats: Some((mean, var)),
                        ..
                    },
                ) = (params, aux)
                {
                    Zip::from(&mut *running_mean)
                        .and(mean)
                        .for_each(|r, &b| *r = m * *r + one_minus * b);
                    Zip::from(&mut *running_var)
                        .and(var)
                        .for_each(|r, &b| *r = (m * *r + one_minus * b).max(F::min_positive_value()));
                }
            }
        }
    }

    /// Backpropagates gradients of the loss with respect to each head's
    /// softmax input (`None` for heads that do not contribute).
    ///
    /// The closing softmax of each head is folded into the supplied logit
    /// gradients, as produced by [`super::mtl_loss`].
    pub fn backward(
        &self,
        out: &ForwardOutput<F>,
        batch: &Batch<'_, F>,
        logit_grads: &[Option<Array2<F>>],
    ) -> Result<Gradients<F>> {
        if out.cache.len() != self.parts.len() || out.cache[0].inputs.is_empty() && !self.spec.trunk.is_empty() {
            return Err(Error::Shape("forward output carries no activation cache".into()));
        }
        if logit_grads.len() != self.spec.heads.len() {
            return Err(Error::Shape(format!(
                "{} head gradients for {} heads",
                logit_grads.len(),
                self.spec.heads.len()
            )));
        }
        let mut grads: Vec<Vec<Grad<F>>> = self
            .parts
            .iter()
            .map(|part| part.iter().map(|p| zero_grad(p)).collect())
            .collect();

        let mut d_trunk = Array2::<F>::zeros(out.trunk.raw_dim());
        for (h, g) in logit_grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = h + 1;
            let n = self.layers(p).len();
            let d = self.backprop_part(p, &out.cache[p], out.mode, batch, g.clone(), n - 1, &mut grads[p], true);
            d_trunk += &d;
        }
        let n = self.spec.trunk.len();
        self.backprop_part(0, &out.cache[0], out.mode, batch, d_trunk, n, &mut grads[0], false);
        Ok(Gradients { parts: grads })
    }

    /// Runs layers `[0, upto)` of a part backwards from `dy`, the gradient at
    /// the output of layer `upto - 1`.
    #[allow(clippy::too_many_arguments)]
    fn backprop_part(
        &self,
        p: usize,
        pc: &PartCache<F>,
        mode: Mode,
        batch: &Batch<'_, F>,
        mut dy: Array2<F>,
        upto: usize,
        grads: &mut [Grad<F>],
        need_input_grad: bool,
    ) -> Array2<F> {
        let layers = self.layers(p);
        let mut pending: BTreeMap<usize, Array2<F>> = BTreeMap::new();
        for i in (0..upto).rev() {
            if let Some(extra) = pending.remove(&i) {
                dy += &extra;
            }
            let input = &pc.inputs[i];
            let last = i == 0 && !need_input_grad;
            dy = match (&layers[i], &self.parts[p][i], &mut grads[i]) {
                (LayerSpec::Affine { .. }, Params::Affine { w, .. }, Grad::Affine { w: gw, b: gb }) => {
                    *gw = input.t().dot(&dy);
                    *gb = dy.sum_axis(Axis(0));
                    if last { dy } else { dy.dot(&w.t()) }
                }
                (LayerSpec::Projection { .. }, Params::Projection { w }, Grad::Projection { w: gw }) => {
                    *gw = input.t().dot(&dy);
                    if last { dy } else { dy.dot(&w.t()) }
                }
                (LayerSpec::Relu { .. }, _, _) => {
                    Zip::from(&mut dy).and(input).for_each(|d, &x| {
                        if x <= F::zero() {
                            *d = F::zero();
                        }
                    });
                    dy
                }
                (
                    LayerSpec::BatchNorm { .. },
                    Params::BatchNorm { gamma, .. },
                    Grad::BatchNorm { gamma: gg, beta: gb },
                ) => {
                    let Aux::Bn { xhat, inv_std, .. } = &pc.aux[i] else {
                        unreachable!("batch norm caches its normalised input")
                    };
                    *gg = (&dy * xhat).sum_axis(Axis(0));
                    *gb = dy.sum_axis(Axis(0));
                    let dxhat = &dy * gamma;
                    if mode == Mode::Train {
                        let b = F::of(dy.nrows() as f64);
                        let sum_d = dxhat.sum_axis(Axis(0));
                        let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                        let mut dx = dxhat * b;
                        dx -= &sum_d;
                        dx -= &(xhat * &sum_dx);
                        dx * &inv_std.mapv(|s| s / b)
                    } else {
                        dxhat * inv_std
                    }
                }
                (LayerSpec::Dropout { .. }, _, _) => match &pc.aux[i] {
                    Aux::Mask(mask) => dy * mask,
                    _ => dy,
                },
                (LayerSpec::Skip { source, .. }, _, _) => {
                    pending
                        .entry(*source)
                        .and_modify(|g| *g += &dy)
                        .or_insert_with(|| dy.clone());
                    dy
                }
                (LayerSpec::Softmax { .. }, _, _) => {
                    // only reached for a softmax whose output gradient was supplied
                    let y = pc.output_of(i);
                    let dot = (&dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    (&dy - &dot) * y
                }
                (LayerSpec::Lhuc { .. }, Params::Lhuc { r }, Grad::Lhuc { r: gr }) => {
                    let Aux::Lhuc { amp } = &pc.aux[i] else {
                        unreachable!("lhuc caches its amplitudes")
                    };
                    if let Some(speakers) = batch.speakers {
                        let contrib = &dy * input;
                        for (row, s) in contrib.rows().into_iter().zip(speakers) {
                            if let (Some(rv), Some(g)) = (r.get(s.as_str()), gr.get_mut(s.as_str())) {
                                for ((gk, &c), &rk) in g.iter_mut().zip(row).zip(rv) {
                                    let sg = F::of(sigmoid(rk.f64()));
                                    *gk = *gk + c * F::of(2.0) * sg * (F::one() - sg);
                                }
                            }
                        }
                    }
                    dy * amp
                }
                _ => unreachable!("gradients always match their layer kind"),
            };
        }
        dy
    }

    fn entries(&self) -> Vec<(TensorId, bool, &[F])> {
        let mut out = Vec::new();
        for (p, part) in self.parts.iter().enumerate() {
            for (i, params) in part.iter().enumerate() {
                match params {
                    Params::None => {}
                    Params::Affine { w, b } => {
                        out.push((TensorId::new(p, i, "w"), true, w.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "b"), true, b.as_slice().unwrap()));
                    }
                    Params::Projection { w } => {
                        out.push((TensorId::new(p, i, "w"), true, w.as_slice().unwrap()));
                    }
                    Params::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    } => {
                        out.push((TensorId::new(p, i, "gamma"), true, gamma.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "beta"), true, beta.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "running_mean"), false, running_mean.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "running_var"), false, running_var.as_slice().unwrap()));
                    }
                    Params::Lhuc { r } => {
                        for (s, v) in r {
                            out.push((TensorId::new(p, i, format!("lhuc[{s}]")), true, v.as_slice().unwrap()));
                        }
                    }
                }
            }
        }
        out
    }

    fn entries_mut(&mut self) -> Vec<(TensorId, bool, &mut [F])> {
        let mut out = Vec::new();
        for (p, part) in self.parts.iter_mut().enumerate() {
            for (i, params) in part.iter_mut().enumerate() {
                match params {
                    Params::None => {}
                    Params::Affine { w, b } => {
                        out.push((TensorId::new(p, i, "w"), true, w.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "b"), true, b.as_slice_mut().unwrap()));
                    }
                    Params::Projection { w } => {
                        out.push((TensorId::new(p, i, "w"), true, w.as_slice_mut().unwrap()));
                    }
                    Params::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    } => {
                        out.push((TensorId::new(p, i, "gamma"), true, gamma.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "beta"), true, beta.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "running_mean"), false, running_mean.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "running_var"), false, running_var.as_slice_mut().unwrap()));
                    }
                    Params::Lhuc { r } => {
                        for (s, v) in r.iter_mut() {
                            out.push((TensorId::new(p, i, format!("lhuc[{s}]")), true, v.as_slice_mut().unwrap()));
                        }
                    }
                }
            }
        }
        out
    }

    /// Trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(TensorId, &[F])> {
        self.entries()
            .into_iter()
            .filter(|e| e.1)
            .map(|(id, _, d)| (id, d))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorId, &mut [F])> {
        self.entries_mut()
            .into_iter()
            .filter(|e| e.1)
            .map(|(id, _, d)| (id, d))
            .collect()
    }

    /// Every tensor including batch-norm running statistics, for persistence.
    pub fn state(&self) -> Vec<(TensorId, &[F])> {
        self.entries().into_iter().map(|(id, _, d)| (id, d)).collect()
    }

    pub fn state_mut(&mut self) -> Vec<(TensorId, &mut [F])> {
        self.entries_mut().into_iter().map(|(id, _, d)| (id, d)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.len()).sum()
    }

    /// CRC32 over the bit patterns of every tensor selected by `include`.
    pub fn fingerprint(&self, include: impl Fn(&TensorId) -> bool) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for (id, data) in self.state() {
            if include(&id) {
                h.update(id.to_string().as_bytes());
                for v in data {
                    h.update(&v.f64().to_bits().to_le_bytes());
                }
            }
        }
        h.finalize()
    }
}

fn zero_grad<F: Scalar>(p: &Params<F>) -> Grad<F> {
    match p {
        Params::None => Grad::None,
        Params::Affine { w, b } => Grad::Affine {
            w: Array2::zeros(w.raw_dim()),
            b: Array1::zeros(b.raw_dim()),
        },
        Params::Projection { w } => Grad::Projection {
            w: Array2::zeros(w.raw_dim()),
        },
        Params::BatchNorm { gamma, beta, .. } => Grad::BatchNorm {
            gamma: Array1::zeros(gamma.raw_dim()),
            beta: Array1::zeros(beta.raw_dim()),
        },
        Params::Lhuc { r } => Grad::Lhuc {
            r: r.iter().map(|(k, v)| (k.clone(), Array1::zeros(v.raw_dim()))).collect(),
        },
    }
}

impl<F: Scalar> Gradients<F> {
    /// Gradient tensors in the same order as [`Network::tensors`].
    pub fn tensors(&self) -> Vec<(TensorId, &[F])> {
        let mut out = Vec::new();
        for (p, part) in self.parts.iter().enumerate() {
            for (i, g) in part.iter().enumerate() {
                match g {
                    Grad::None => {}
                    Grad::Affine { w, b } => {
                        out.push((TensorId::new(p, i, "w"), w.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "b"), b.as_slice().unwrap()));
                    }
                    Grad::Projection { w } => out.push((TensorId::new(p, i, "w"), w.as_slice().unwrap())),
                    Grad::BatchNorm { gamma, beta } => {
                        out.push((TensorId::new(p, i, "gamma"), gamma.as_slice().unwrap()));
                        out.push((TensorId::new(p, i, "beta"), beta.as_slice().unwrap()));
                    }
                    Grad::Lhuc { r } => {
                        for (s, v) in r {
                            out.push((TensorId::new(p, i, format!("lhuc[{s}]")), v.as_slice().unwrap()));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorId, &mut [F])> {
        let mut out = Vec::new();
        for (p, part) in self.parts.iter_mut().enumerate() {
            for (i, g) in part.iter_mut().enumerate() {
                match g {
                    Grad::None => {}
                    Grad::Affine { w, b } => {
                        out.push((TensorId::new(p, i, "w"), w.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "b"), b.as_slice_mut().unwrap()));
                    }
                    Grad::Projection { w } => out.push((TensorId::new(p, i, "w"), w.as_slice_mut().unwrap())),
                    Grad::BatchNorm { gamma, beta } => {
                        out.push((TensorId::new(p, i, "gamma"), gamma.as_slice_mut().unwrap()));
                        out.push((TensorId::new(p, i, "beta"), beta.as_slice_mut().unwrap()));
                    }
                    Grad::Lhuc { r } => {
                        for (s, v) in r.iter_mut() {
                            out.push((TensorId::new(p, i, format!("lhuc[{s}]")), v.as_slice_mut().unwrap()));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, d)| d.iter())
            .fold(0.0, |m, v| m.max(v.f64().abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::spec::HeadSpec;
    use ndarray::array;

    fn softmax_only(dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: dim,
            trunk: vec![],
            heads: vec![HeadSpec {
                name: "s".into(),
                layers: vec![LayerSpec::Softmax { dim }],
            }],
        }
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let net = Network::<f64>::new(softmax_only(3), 0).unwrap();
        let x = array![[0.0, 0.0, 0.0]];
        let out = net.predict(&Batch::new(x.view())).unwrap();
        for p in out.heads[0].iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let spec = NetworkSpec {
            input_dim: 2,
            trunk: vec![LayerSpec::Relu { dim: 2 }],
            heads: vec![HeadSpec::softmax("h", 2, 2)],
        };
        let net = Network::<f64>::new(spec, 0).unwrap();
        let x = array![[-1.0, 2.0]];
        let out = net.predict(&Batch::new(x.view())).unwrap();
        assert_eq!(out.trunk, array![[0.0, 2.0]]);
    }

    #[test]
    fn lhuc_limits_and_identity() {
        let h: Array2<f64> = array![[1.0, -2.0, 3.0]];
        assert_eq!(lhuc_scale(h.view(), array![0.0, 0.0, 0.0].view()).unwrap(), h);
        let big = lhuc_scale(h.view(), array![40.0, 40.0, 40.0].view()).unwrap();
        let small = lhuc_scale(h.view(), array![-40.0, -40.0, -40.0].view()).unwrap();
        for k in 0..3 {
            assert!((big[[0, k]] - 2.0 * h[[0, k]]).abs() < 1e-12);
            assert!(small[[0, k]].abs() < 1e-12);
        }
        assert!(lhuc_scale(h.view(), array![0.0].view()).is_err());
    }

    #[test]
    fn shape_errors() {
        let net = Network::<f64>::new(softmax_only(3), 0).unwrap();
        let x = array![[0.0, 1.0]];
        assert!(matches!(net.predict(&Batch::new(x.view())), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_norm_normalises_in_training() {
        let spec = NetworkSpec {
            input_dim: 4,
            trunk: vec![LayerSpec::BatchNorm { dim: 4 }],
            heads: vec![HeadSpec::softmax("h", 4, 2)],
        };
        let net = Network::<f64>::new(spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((16, 4), || rng.random_range(-3.0..7.0));
        let out = net.forward(&Batch::new(x.view()), Mode::Train, None).unwrap();
        for col in out.trunk.columns() {
            let m = col.mean().unwrap();
            let v = col.var(0.0);
            assert!(m.abs() <= 1e-6);
            assert!((v - 1.0).abs() <= 1e-5 * 10.0, "var {v}");
        }
    }
}
