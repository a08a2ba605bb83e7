//! Energy-threshold voice activity detection used to strip silence.

use super::Waveform;

pub const DEFAULT_FRAME_MS: f64 = 25.0;
pub const DEFAULT_ENERGY_FLOOR_DB: f64 = -35.0;

fn frame_len(sample_rate: u32, frame_ms: f64) -> usize {
    ((frame_ms * f64::from(sample_rate) / 1000.0).round() as usize).max(1)
}

fn mean_square(frame: &[f64]) -> f64 {
    frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64
}

/// Removes non-overlapping frames whose RMS level lies more than
/// `|energy_floor_db|` below the loudest frame. At least the loudest frame is
/// always kept, so an all-zero signal collapses to a single frame.
///
/// # Panics
/// If `frame_ms` is not positive.
pub fn strip_silence(w: &Waveform, frame_ms: f64, energy_floor_db: f64) -> Waveform {
    assert!(frame_ms > 0.0, "frame_ms must be positive");
    if w.samples.is_empty() {
        return w.clone();
    }
    let len = frame_len(w.sample_rate, frame_ms);
    let energies: Vec<f64> = w.samples.chunks(len).map(mean_square).collect();
    let (loudest, max_energy) = energies
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    let keep: Vec<bool> = if max_energy <= 0.0 {
        (0..energies.len()).map(|i| i == loudest).collect()
    } else {
        let threshold_db = 10.0 * max_energy.log10() + energy_floor_db;
        energies
            .iter()
            .map(|&e| e > 0.0 && 10.0 * e.log10() >= threshold_db)
            .collect()
    };

    let samples = w
        .samples
        .chunks(len)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .flat_map(|(c, _)| c.iter().copied())
        .collect();
    Waveform {
        samples,
        sample_rate: w.sample_rate,
        source_id: w.source_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zeros_keep_one_frame() {
        let w = Waveform::new(vec![0.0; 4000], 16000, "z");
        let out = strip_silence(&w, 25.0, -30.0);
        assert_eq!(out.len(), 400);
    }

    #[test]
    fn loud_tone_is_untouched() {
        let s: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.3).sin() * 0.5).collect();
        let w = Waveform::new(s, 16000, "t");
        assert_eq!(strip_silence(&w, 25.0, -35.0).len(), 8000);
    }

    #[test]
    fn only_tone_third_survives() {
        let n = 12000;
        let s: Vec<f64> = (0..n)
            .map(|i| {
                if (n / 3..2 * n / 3).contains(&i) {
                    (2.0 * PI * 440.0 * i as f64 / 16000.0).sin() * 0.8
                } else {
                    0.0
                }
            })
            .collect();
        let w = Waveform::new(s.clone(), 16000, "t");
        let out = strip_silence(&w, 25.0, -30.0);
        // frame-energy oracle: count frames of the input with any energy in the tone span
        let flen = 400;
        let tone_frames = s
            .chunks(flen)
            .filter(|c| c.iter().any(|x| x.abs() > 0.0))
            .count();
        let frames_out = out.len().div_ceil(flen) as i64;
        assert!((frames_out - (n / 3 / flen) as i64).abs() <= 1);
        assert!(frames_out <= tone_frames as i64);
    }

    proptest! {
        #[test]
        fn idempotent(samples in proptest::collection::vec(-1.0f64..1.0, 1..3000),
                      gate in proptest::collection::vec(0.0f64..1.0, 1..30),
                      floor in -60.0f64..-5.0) {
            let s: Vec<f64> = samples
                .iter()
                .enumerate()
                .map(|(i, x)| x * gate[i * gate.len() / samples.len()].powi(4))
                .collect();
            let w = Waveform::new(s, 8000, "p");
            let once = strip_silence(&w, 10.0, floor);
            let twice = strip_silence(&once, 10.0, floor);
            prop_assert_eq!(once.samples, twice.samples);
        }
    }
}
