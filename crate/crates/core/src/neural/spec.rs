use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `y = x W + b`.
    Affine { in_dim: usize, out_dim: usize },
    Relu { dim: usize },
    BatchNorm { dim: usize },
    /// Inverted dropout; identity in evaluation mode.
    Dropout { dim: usize, rate: f64 },
    /// Bias-free linear projection to a narrower width, `y = x W`.
    Projection { in_dim: usize, out_dim: usize },
    /// Adds the output of an earlier layer `source` of the same stack.
    Skip { dim: usize, source: usize },
    Softmax { dim: usize },
    /// Per-speaker hidden unit amplitude scaling `y = h ⊙ 2σ(r_s)`.
    Lhuc { dim: usize, key: String },
}

impl LayerSpec {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { in_dim, .. } | LayerSpec::Projection { in_dim, .. } => in_dim,
            LayerSpec::Relu { dim }
            | LayerSpec::BatchNorm { dim }
            | LayerSpec::Dropout { dim, .. }
            | LayerSpec::Skip { dim, .. }
            | LayerSpec::Softmax { dim }
            | LayerSpec::Lhuc { dim, .. } => dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { out_dim, .. } | LayerSpec::Projection { out_dim, .. } => out_dim,
            _ => self.in_dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Affine { .. } => "affine",
            LayerSpec::Relu { .. } => "relu",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Projection { .. } => "projection",
            LayerSpec::Skip { .. } => "skip",
            LayerSpec::Softmax { .. } => "softmax",
            LayerSpec::Lhuc { .. } => "lhuc",
        }
    }
}

/// An output head on top of the shared trunk; must end in a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl HeadSpec {
    /// Affine map to `classes` logits followed by softmax.
    pub fn softmax(name: impl Into<String>, in_dim: usize, classes: usize) -> Self {
        HeadSpec {
            name: name.into(),
            layers: vec![
                LayerSpec::Affine {
                    in_dim,
                    out_dim: classes,
                },
                LayerSpec::Softmax { dim: classes },
            ],
        }
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::out_dim)
    }
}

/// Trunk layers shared by all heads. The trunk output is the bottleneck tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    pub fn trunk_dim(&self) -> usize {
        self.trunk.last().map_or(self.input_dim, LayerSpec::out_dim)
    }

    fn check_stack(layers: &[LayerSpec], mut dim: usize, part: &str) -> Result<()> {
        for (i, layer) in layers.iter().enumerate() {
            let at = || format!("{part} layer {i} ({})", layer.kind());
            if layer.in_dim() != dim {
                return Err(Error::Shape(format!(
                    "{} expects {} inputs but receives {dim}",
                    at(),
                    layer.in_dim()
                )));
            }
            match layer {
                LayerSpec::Dropout { rate, .. } if !(0.0..1.0).contains(rate) => {
                    return Err(Error::config(at(), format!("dropout rate {rate} outside [0, 1)")));
                }
                LayerSpec::Projection { in_dim, out_dim } if out_dim >= in_dim => {
                    return Err(Error::config(
                        at(),
                        format!("projection width {out_dim} must be below input width {in_dim}"),
                    ));
                }
                LayerSpec::Skip { source, dim: d } => {
                    if *source >= i {
                        return Err(Error::config(at(), "skip source must precede the junction"));
                    }
                    if layers[*source].out_dim() != *d {
                        return Err(Error::Shape(format!(
                            "{} adds a {}-wide source to a {d}-wide stream",
                            at(),
                            layers[*source].out_dim()
                        )));
                    }
                }
                _ => {}
            }
            if matches!(layer, LayerSpec::Softmax { .. }) && (part == "trunk" || i + 1 != layers.len()) {
                return Err(Error::config(at(), "softmax may only close an output head"));
            }
            if layer.out_dim() == 0 {
                return Err(Error::config(at(), "zero width"));
            }
            dim = layer.out_dim();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be positive"));
        }
        Self::check_stack(&self.trunk, self.input_dim, "trunk")?;
        if self.heads.is_empty() {
            return Err(Error::config("heads", "network needs at least one head"));
        }
        for head in &self.heads {
            Self::check_stack(&head.layers, self.trunk_dim(), &format!("head `{}`", head.name))?;
            if !matches!(head.layers.last(), Some(LayerSpec::Softmax { .. })) {
                return Err(Error::config(
                    format!("head `{}`", head.name),
                    "must end in a softmax layer",
                ));
            }
            if head.layers.iter().any(|l| matches!(l, LayerSpec::Skip { .. })) {
                return Err(Error::config(format!("head `{}`", head.name), "skip junctions belong in the trunk"));
            }
        }
        let mut keys: Vec<&str> = self
            .all_layers()
            .filter_map(|l| match l {
                LayerSpec::Lhuc { key, .. } => Some(key.as_str()),
                _ => None,
            })
            .collect();
        let n = keys.len();
        keys.sort_unstable();
        keys.dedup();
        if keys.len() != n {
            return Err(Error::config("lhuc", "LHUC layer keys must be unique"));
        }
        Ok(())
    }

    pub fn all_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.trunk
            .iter()
            .chain(self.heads.iter().flat_map(|h| h.layers.iter()))
    }
}
