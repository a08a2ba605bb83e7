use super::Waveform;
use crate::error::{Error, Result};

/// Speed perturbation by linear-interpolation resampling of the time axis.
///
/// A factor above 1 shortens the signal (and raises every frequency by the
/// same factor); the sample rate is left unchanged.
pub fn speed_perturb(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(Error::param("factor", format!("{factor} outside [0.5, 2.0]")));
    }
    if factor == 1.0 || w.samples.len() < 2 {
        return Ok(w.clone());
    }
    let n = w.samples.len();
    let out_len = ((n - 1) as f64 / factor).floor() as usize + 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * factor;
            let k = (pos.floor() as usize).min(n - 1);
            let frac = pos - k as f64;
            if k + 1 < n {
                w.samples[k] * (1.0 - frac) + w.samples[k + 1] * frac
            } else {
                w.samples[k]
            }
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
        source_id: w.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, n: usize, sr: u32) -> Waveform {
        let s = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / f64::from(sr)).sin() * 0.5)
            .collect();
        Waveform::new(s, sr, "sine")
    }

    // direct O(n^2) DFT magnitude peak; independent of rustfft
    fn dft_peak_hz(w: &Waveform) -> f64 {
        let n = w.samples.len();
        let mut best = (0, 0.0);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in w.samples.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let mag = re.hypot(im);
            if mag > best.1 {
                best = (k, mag);
            }
        }
        best.0 as f64 * f64::from(w.sample_rate) / n as f64
    }

    #[test]
    fn identity_and_length() {
        let w = sine(100.0, 1000, 8000);
        assert_eq!(speed_perturb(&w, 1.0).unwrap().samples, w.samples);
        let fast = speed_perturb(&w, 2.0).unwrap();
        assert!((fast.len() as i64 - 500).abs() <= 1);
        assert!(speed_perturb(&w, 0.4).is_err());
        assert!(speed_perturb(&w, 2.1).is_err());
    }

    #[test]
    fn perturbation_scales_spectral_peak() {
        // duration scales by 1/factor, so frequencies scale by factor
        let w = sine(100.0, 2000, 2000);
        let slow = dft_peak_hz(&speed_perturb(&w, 0.9).unwrap());
        assert!((slow - 90.0).abs() < 2.0, "peak {slow}");
        let fast = dft_peak_hz(&speed_perturb(&w, 1.0 / 0.9).unwrap());
        assert!((fast - 111.1).abs() < 2.0, "peak {fast}");
    }

    proptest! {
        #[test]
        fn inverse_factor_restores_length(n in 2usize..5000, f in 0.5f64..2.0) {
            let w = Waveform::new(vec![0.1; n], 16000, "p");
            let there = speed_perturb(&w, f).unwrap();
            let back = speed_perturb(&there, 1.0 / f).unwrap();
            prop_assert!((back.len() as i64 - n as i64).abs() <= 2);
        }
    }
}
