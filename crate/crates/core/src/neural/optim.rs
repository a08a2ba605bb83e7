use super::network::{Gradients, Network, TensorId};
use super::Scalar;
use crate::error::{Error, Result};

/// Which tensors an optimiser step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Freeze {
    /// Update everything.
    #[default]
    None,
    /// Update only LHUC vectors.
    LhucOnly,
    /// Update everything except LHUC vectors.
    AllButLhuc,
}

impl Freeze {
    pub fn allows(self, id: &TensorId) -> bool {
        match self {
            Freeze::None => true,
            Freeze::LhucOnly => id.is_lhuc(),
            Freeze::AllButLhuc => !id.is_lhuc(),
        }
    }
}

/// SGD with classical momentum and L2 decay on weight matrices:
/// `v ← μv − lr (g + λθ)`, `θ ← θ + v`. LHUC vectors take their own
/// decay `lhuc_l2`, which pulls them toward the identity scaling.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub lhuc_l2: f64,
    velocity: Vec<(TensorId, Vec<f64>)>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, l2: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::param("lr", format!("{lr} must be finite and non-negative")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::param("momentum", format!("{momentum} outside [0, 1)")));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::param("l2", format!("{l2} must be finite and non-negative")));
        }
        Ok(Sgd {
            lr,
            momentum,
            l2,
            lhuc_l2: 0.0,
            velocity: Vec::new(),
        })
    }

    pub fn with_lhuc_l2(mut self, lhuc_l2: f64) -> Result<Self> {
        if !(lhuc_l2 >= 0.0 && lhuc_l2.is_finite()) {
            return Err(Error::param("lhuc_l2", format!("{lhuc_l2} must be finite and non-negative")));
        }
        self.lhuc_l2 = lhuc_l2;
        Ok(self)
    }

    /// Applies one update to the tensors of `net` allowed by `freeze`.
    pub fn step<F: Scalar>(&mut self, net: &mut Network<F>, grads: &Gradients<F>, freeze: Freeze) -> Result<()> {
        let g = grads.tensors();
        let mut params = net.tensors_mut();
        if g.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameters",
                g.len(),
                params.len()
            )));
        }
        if self.velocity.len() != params.len()
            || self.velocity.iter().zip(&params).any(|(v, p)| v.0 != p.0 || v.1.len() != p.1.len())
        {
            self.velocity = params.iter().map(|(id, d)| (id.clone(), vec![0.0; d.len()])).collect();
        }
        for (((id, theta), (gid, grad)), (_, vel)) in params.iter_mut().zip(&g).zip(&mut self.velocity) {
            debug_assert_eq!(id, gid);
            if !freeze.allows(id) {
                continue;
            }
            let decay = if id.is_lhuc() {
                self.lhuc_l2
            } else if id.name == "w" {
                self.l2
            } else {
                0.0
            };
            for ((t, gr), v) in theta.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
                let tf = t.f64();
                *v = self.momentum * *v - self.lr * (gr.f64() + decay * tf);
                *t = F::of(tf + *v);
            }
        }
        Ok(())
    }
}
