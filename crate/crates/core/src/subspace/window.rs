/// Elementwise mean and population standard deviation over sliding windows
/// of a temporal basis vector.
///
/// Windows are `v[k·stride .. k·stride + window]` for every `k` that fits.
/// A vector shorter than the window is tiled cyclically to exactly one
/// window, whose deviation is zero.
///
/// # Panics
/// If `window` or `stride` is zero, or `v` is empty.
pub fn temporal_window_stats(v: &[f64], window: usize, stride: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(window >= 1 && stride >= 1, "window and stride must be positive");
    assert!(!v.is_empty(), "temporal basis vector is empty");
    if v.len() < window {
        let tiled = (0..window).map(|i| v[i % v.len()]).collect();
        return (tiled, vec![0.0; window]);
    }
    let count = (v.len() - window) / stride + 1;
    let mut mean = vec![0.0; window];
    for k in 0..count {
        let start = k * stride;
        for (m, x) in mean.iter_mut().zip(&v[start..start + window]) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; window];
    for k in 0..count {
        let start = k * stride;
        for ((acc, x), m) in var.iter_mut().zip(&v[start..start + window]).zip(&mean) {
            *acc += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|s| (s / count as f64).sqrt()).collect();
    (mean, std)
}
