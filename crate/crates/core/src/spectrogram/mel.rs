use ndarray::Array2;

use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `channels × (fft_size/2 + 1)` matrix of triangular filters equally spaced
/// on the mel scale between 0 Hz and Nyquist.
pub fn mel_filterbank(channels: usize, fft_size: usize, sample_rate: u32) -> Result<Array2<f64>> {
    let bins = fft_size / 2 + 1;
    if channels + 2 > bins {
        return Err(Error::config(
            "mel_channels",
            format!("{channels} channels need more than the {bins} available FFT bins"),
        ));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..channels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (channels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / fft_size as f64;

    let mut bank = Array2::zeros((channels, bins));
    for c in 0..channels {
        let (lo, mid, hi) = (edges[c], edges[c + 1], edges[c + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            bank[[c, k]] = w;
        }
        if bank.row(c).sum() <= 0.0 {
            return Err(Error::config(
                "mel_channels",
                format!("filter {c} covers no FFT bin; reduce channels or increase fft_size"),
            ));
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_warping_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
    }

    #[test]
    fn default_bank_is_nonnegative_and_overlapping() {
        let bank = mel_filterbank(80, 512, 16000).unwrap();
        assert!(bank.iter().all(|&w| w >= 0.0));
        for c in 0..80 {
            assert!(bank.row(c).sum() > 0.0);
        }
        // at 512 points the lowest filters are narrower than a bin, so
        // overlap of neighbouring responses is checked on a finer grid
        let bank = mel_filterbank(80, 1024, 16000).unwrap();
        for c in 0..79 {
            let overlap = bank
                .row(c)
                .iter()
                .zip(bank.row(c + 1))
                .any(|(a, b)| *a > 0.0 && *b > 0.0);
            assert!(overlap, "filters {c} and {} do not overlap", c + 1);
        }
    }
}
