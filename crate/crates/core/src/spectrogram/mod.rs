//! Short-time spectral analysis: Hamming-windowed STFT magnitudes, log mel
//! spectrograms and FBank + delta acoustic features.

mod delta;
mod mel;

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

pub use delta::{fbank_delta, AcousticFeatures, DELTA_WINDOW};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};

/// Front-end analysis parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndConfig {
    pub mel_channels: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    /// `None` picks the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub amplitude_floor: f64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            mel_channels: 80,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            fft_size: None,
            amplitude_floor: 1e-10,
        }
    }
}

impl FrontEndConfig {
    pub fn frame_length(&self, sample_rate: u32) -> usize {
        ((self.frame_length_ms * f64::from(sample_rate) / 1000.0).round() as usize).max(1)
    }

    pub fn frame_shift(&self, sample_rate: u32) -> usize {
        ((self.frame_shift_ms * f64::from(sample_rate) / 1000.0).round() as usize).max(1)
    }

    pub fn fft_size_for(&self, sample_rate: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.frame_length(sample_rate).next_power_of_two())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mel_channels < 2 {
            return Err(Error::config("mel_channels", "must be at least 2"));
        }
        if !(self.frame_length_ms > 0.0) {
            return Err(Error::config("frame_length_ms", "must be positive"));
        }
        if !(self.frame_shift_ms > 0.0) {
            return Err(Error::config("frame_shift_ms", "must be positive"));
        }
        if !(self.amplitude_floor > 0.0) {
            return Err(Error::config("amplitude_floor", "must be positive"));
        }
        if let Some(n) = self.fft_size {
            if !n.is_power_of_two() {
                return Err(Error::config("fft_size", format!("{n} is not a power of two")));
            }
        }
        Ok(())
    }
}

/// C×T matrix of natural-log mel amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
}

impl MelSpectrogram {
    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Number of analysis frames for an `n`-sample signal. Signals shorter than
/// one frame are zero padded to exactly one frame.
pub fn frame_count(n: usize, frame_len: usize, shift: usize) -> usize {
    if n <= frame_len {
        1
    } else {
        1 + (n - frame_len) / shift
    }
}

fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    shift: usize,
}

impl Stft {
    fn new(frame_len: usize, shift: usize, fft_size: usize) -> Self {
        Stft {
            window: hamming(frame_len),
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            shift,
        }
    }

    fn magnitudes(&self, samples: &[f64]) -> Array2<f64> {
        let frame_len = self.window.len();
        let frames = frame_count(samples.len(), frame_len, self.shift);
        let bins = self.fft_size / 2 + 1;
        let mut out = Array2::zeros((bins, frames));
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        for t in 0..frames {
            let start = t * self.shift;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                let x = samples.get(start + i).copied().unwrap_or(0.0);
                buf[i] = Complex::new(x * w, 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..bins {
                out[[k, t]] = buf[k].norm();
            }
        }
        out
    }
}

/// One-sided DFT magnitudes of Hamming-windowed frames, shape
/// `(fft_size/2 + 1) × T`.
pub fn stft_magnitude(
    w: &Waveform,
    frame_length_ms: f64,
    frame_shift_ms: f64,
    fft_size: usize,
) -> Result<Array2<f64>> {
    let cfg = FrontEndConfig {
        frame_length_ms,
        frame_shift_ms,
        fft_size: Some(fft_size),
        ..FrontEndConfig::default()
    };
    cfg.validate()?;
    let frame_len = cfg.frame_length(w.sample_rate);
    if fft_size < frame_len {
        return Err(Error::config(
            "fft_size",
            format!("{fft_size} is shorter than the {frame_len}-sample frame"),
        ));
    }
    Ok(Stft::new(frame_len, cfg.frame_shift(w.sample_rate), fft_size).magnitudes(&w.samples))
}

/// Log mel-filterbank amplitude spectrogram.
pub fn mel_spectrogram(w: &Waveform, cfg: &FrontEndConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    let fft_size = cfg.fft_size_for(w.sample_rate);
    let bank = mel_filterbank(cfg.mel_channels, fft_size, w.sample_rate)?;
    let mags = stft_magnitude(w, cfg.frame_length_ms, cfg.frame_shift_ms, fft_size)?;
    let floor = cfg.amplitude_floor;
    let values = bank.dot(&mags).mapv(|v| v.max(floor).ln());
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("mel spectrogram"));
    }
    Ok(MelSpectrogram {
        values,
        frame_length_ms: cfg.frame_length_ms,
        frame_shift_ms: cfg.frame_shift_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_signal() {
        let w = Waveform::new(vec![0.0; 1600], 16000, "z");
        let m = stft_magnitude(&w, 25.0, 10.0, 512).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let mel = mel_spectrogram(&w, &FrontEndConfig::default()).unwrap();
        let floor = 1e-10f64.ln();
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn frame_arithmetic() {
        for n in [400, 401, 559, 560, 16000, 16123] {
            let w = Waveform::new(vec![0.1; n], 16000, "f");
            let m = stft_magnitude(&w, 25.0, 10.0, 512).unwrap();
            assert_eq!(m.ncols(), 1 + (n - 400) / 160, "n = {n}");
            assert_eq!(m.nrows(), 257);
            let mel = mel_spectrogram(&w, &FrontEndConfig::default()).unwrap();
            assert_eq!(mel.frames(), m.ncols());
        }
        let short = Waveform::new(vec![0.1; 10], 16000, "s");
        assert_eq!(stft_magnitude(&short, 25.0, 10.0, 512).unwrap().ncols(), 1);
        assert!(stft_magnitude(&short, 25.0, 10.0, 256).is_err());
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        // oracle: a sine at k * sr / N has a DFT line at bin k; Hamming leakage
        // is symmetric, so the argmax stays on k
        let (sr, n_fft) = (16000u32, 512usize);
        for k in [8usize, 37, 100, 200] {
            let f = k as f64 * f64::from(sr) / n_fft as f64;
            let s = (0..8000).map(|i| (2.0 * PI * f * i as f64 / f64::from(sr)).sin()).collect();
            let m = stft_magnitude(&Waveform::new(s, sr, "s"), 25.0, 10.0, n_fft).unwrap();
            for col in m.columns() {
                let arg = col
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert_eq!(arg, k);
            }
        }
    }

    #[test]
    fn white_noise_column_means_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = FrontEndConfig::default();
        for _ in 0..100 {
            let s = (0..8000).map(|_| rng.random_range(-0.5..0.5)).collect();
            let mel = mel_spectrogram(&Waveform::new(s, 16000, "n"), &cfg).unwrap();
            let means: Vec<f64> = mel.values.columns().into_iter().map(|c| c.mean().unwrap()).collect();
            let mu = means.iter().sum::<f64>() / means.len() as f64;
            let sd = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt();
            assert!(sd / mu.abs() < 0.2, "cv {}", sd / mu.abs());
        }
    }

    #[test]
    fn too_many_channels_is_a_config_error() {
        let w = Waveform::new(vec![0.1; 1000], 8000, "c");
        let cfg = FrontEndConfig {
            mel_channels: 200,
            ..FrontEndConfig::default()
        };
        assert!(matches!(mel_spectrogram(&w, &cfg), Err(Error::Config { .. })));
    }
}
