//! A small feed-forward network stack: affine, ReLU, batch normalisation,
//! dropout, linear bottleneck projection, skip junction, softmax and LHUC
//! scaling layers, trained with momentum SGD on a multi-task cross-entropy.

mod checkpoint;
mod gradcheck;
mod loss;
mod network;
mod optim;
mod spec;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, layer_suite, GradCheckOptions, GradCheckReport, TensorCheck, MAX_BATCH};
pub use loss::{mtl_loss, LossOutput, MtlBatch};
pub use network::{
    lhuc_amplitude, lhuc_scale, Batch, DropoutMasks, ForwardOutput, Gradients, Mode, Network,
    TensorId,
};
pub use optim::{Freeze, Sgd};
pub use spec::{HeadSpec, LayerSpec, NetworkSpec};

/// Floating point element type of a network.
pub trait Scalar:
    LinalgScalar
    + Float
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// STBF dtype code.
    const DTYPE: crate::stbf::DType;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: crate::stbf::DType = crate::stbf::DType::F32;
}

impl Scalar for f64 {
    const DTYPE: crate::stbf::DType = crate::stbf::DType::F64;
}
