//! Spectro-temporal subspace decomposition of mel spectrograms and the
//! fixed-length utterance features built from it.

mod feature;
mod svd;
mod window;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

pub use feature::{utterance_feature, InputConfig, SubspaceConfig, UtteranceFeature};
pub use svd::{max_sweeps, svd, SubspaceDecomposition};
pub use window::temporal_window_stats;

/// Leading `d_s` spectral bases (C × d_s) and `d_t` temporal bases (d_t × T).
pub fn truncate(
    dec: &SubspaceDecomposition,
    d_s: usize,
    d_t: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let c = dec.u.nrows();
    let t = dec.vt.nrows();
    if d_s == 0 || d_s > c {
        return Err(Error::param("d_s", format!("{d_s} not in 1..={c}")));
    }
    if d_t == 0 || d_t > t {
        return Err(Error::param("d_t", format!("{d_t} not in 1..={t}")));
    }
    Ok((
        dec.u.slice(s![.., ..d_s]).to_owned(),
        dec.vt.slice(s![..d_t, ..]).to_owned(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{Intelligibility, UtteranceMeta};
    use crate::spectrogram::MelSpectrogram;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> UtteranceMeta {
        UtteranceMeta {
            speaker_id: "S".into(),
            block_id: "B1".into(),
            word_id: "W".into(),
            intelligibility: Intelligibility::M,
        }
    }

    fn mel(values: Array2<f64>) -> MelSpectrogram {
        MelSpectrogram {
            values,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
        }
    }

    // cosines of the principal angles between two 2-column orthonormal
    // bases, from the closed-form eigenvalues of the 2x2 Gram matrix MᵀM
    fn principal_angles_2d(a: &Array2<f64>, b: &Array2<f64>) -> [f64; 2] {
        let m = a.t().dot(b);
        let g = m.t().dot(&m);
        let tr = g[[0, 0]] + g[[1, 1]];
        let det = g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let cos = |ev: f64| ev.max(0.0).sqrt().min(1.0).acos();
        [cos(tr / 2.0 + disc), cos(tr / 2.0 - disc)]
    }

    fn orthonormalize_2(m: &Array2<f64>) -> Array2<f64> {
        let mut q = m.clone();
        let n0 = q.column(0).dot(&q.column(0)).sqrt();
        q.column_mut(0).mapv_inplace(|x| x / n0);
        let proj = q.column(0).dot(&q.column(1));
        let c0 = q.column(0).to_owned();
        q.column_mut(1).scaled_add(-proj, &c0);
        let n1 = q.column(1).dot(&q.column(1)).sqrt();
        q.column_mut(1).mapv_inplace(|x| x / n1);
        q
    }

    #[test]
    fn truncation_bounds() {
        let d = svd(Array2::<f64>::eye(4).view()).unwrap();
        assert!(truncate(&d, 0, 1).is_err());
        assert!(truncate(&d, 5, 1).is_err());
        assert!(truncate(&d, 1, 5).is_err());
        let (u, v) = truncate(&d, 2, 3).unwrap();
        assert_eq!(u.dim(), (4, 2));
        assert_eq!(v.dim(), (3, 4));
    }

    #[test]
    fn default_constants_give_410_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in [3, 24, 25, 60, 181] {
            let s = mel(Array2::from_shape_fn((80, t), |_| rng.random_range(-5.0..0.0)));
            let f = utterance_feature(&s, &SubspaceConfig::default(), meta()).unwrap();
            assert_eq!(f.spectral.len(), 160);
            assert_eq!(f.temporal.len(), 250);
            assert_eq!(f.len(), 410);
            assert_eq!(f.padded, t < 5);
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = mel(Array2::from_shape_fn((40, 70), |_| rng.random_range(-5.0..0.0)));
        let cfg = SubspaceConfig::default();
        let a = utterance_feature(&s, &cfg, meta()).unwrap();
        let b = utterance_feature(&s, &cfg, meta()).unwrap();
        assert_eq!(a.to_vec().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   b.to_vec().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rank_two_spectrogram_recovers_envelope_subspace() {
        let c = 40;
        let env_a: Vec<f64> = (0..c).map(|i| (-(i as f64 - 10.0).powi(2) / 30.0).exp()).collect();
        let env_b: Vec<f64> = (0..c).map(|i| (-(i as f64 - 28.0).powi(2) / 50.0).exp()).collect();
        let t = 90;
        let s = Array2::from_shape_fn((c, t), |(i, j)| {
            let w = j as f64 / t as f64;
            env_a[i] * (1.0 + (6.0 * w).sin()) + env_b[i] * (2.0 - w)
        });
        let cfg = SubspaceConfig::default();
        let f = utterance_feature(&mel(s), &cfg, meta()).unwrap();
        let basis = Array2::from_shape_vec((2, c), f.spectral.clone()).unwrap().reversed_axes();
        let env = Array2::from_shape_fn((c, 2), |(i, k)| if k == 0 { env_a[i] } else { env_b[i] });
        let angles = principal_angles_2d(&basis, &orthonormalize_2(&env));
        assert!(angles.iter().all(|&a| a < 1e-6), "{angles:?}");
    }

    #[test]
    fn time_stretch_changes_temporal_part_only() {
        let c = 30;
        let t = 60;
        let template = Array2::from_shape_fn((c, t), |(i, j)| {
            let ci = i as f64 / c as f64;
            let tj = j as f64 / t as f64;
            -3.0 + (3.0 * ci).sin() * (1.0 + (9.0 * tj).cos()) + (5.0 * ci).cos() * tj
        });
        let stretched = Array2::from_shape_fn((c, 2 * t), |(i, j)| template[[i, j / 2]]);
        let cfg = SubspaceConfig::default();
        let a = utterance_feature(&mel(template), &cfg, meta()).unwrap();
        let b = utterance_feature(&mel(stretched), &cfg, meta()).unwrap();

        let to_basis = |f: &UtteranceFeature| {
            Array2::from_shape_vec((2, c), f.spectral.clone()).unwrap().reversed_axes()
        };
        let angles = principal_angles_2d(&to_basis(&a), &to_basis(&b));
        assert!(angles.iter().all(|&x| x < 0.05), "{angles:?}");

        let unit = |v: &[f64]| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let dist = unit(&a.temporal)
            .iter()
            .zip(unit(&b.temporal))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.1, "temporal distance {dist}");
    }
}
