//! Deterministic inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subbasis_core::audio::Waveform;

/// Uniform random C×T matrix standing in for a log-mel spectrogram.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// One second of a two-tone signal with light noise at 16 kHz.
pub fn test_waveform(seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..16000)
        .map(|i| {
            let t = i as f64 / 16000.0;
            0.3 * (2.0 * std::f64::consts::PI * 220.0 * t).sin()
                + 0.1 * (2.0 * std::f64::consts::PI * 1870.0 * t).sin()
                + 0.01 * rng.random_range(-1.0..1.0)
        })
        .collect();
    Waveform::new(samples, 16000, "bench")
}
