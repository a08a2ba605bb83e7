use ndarray::{s, Array2};

use super::MelSpectrogram;

/// Half-width of the delta regression window.
pub const DELTA_WINDOW: usize = 2;

/// T×F acoustic features: static log mel channels followed by their deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFeatures {
    pub values: Array2<f64>,
}

impl AcousticFeatures {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Stacks static features with regression deltas
/// `d_t = Σ n (c_{t+n} − c_{t−n}) / (2 Σ n²)`, replicating edge frames.
pub fn fbank_delta(m: &MelSpectrogram) -> AcousticFeatures {
    let (c, t) = m.values.dim();
    let stat = m.values.t();
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((t, 2 * c));
    out.slice_mut(s![.., ..c]).assign(&stat);
    let last = t as isize - 1;
    for frame in 0..t {
        for n in 1..=DELTA_WINDOW {
            let fwd = (frame as isize + n as isize).min(last) as usize;
            let back = (frame as isize - n as isize).max(0) as usize;
            for ch in 0..c {
                out[[frame, c + ch]] += n as f64 * (stat[[fwd, ch]] - stat[[back, ch]]) / denom;
            }
        }
    }
    AcousticFeatures { values: out }
}
