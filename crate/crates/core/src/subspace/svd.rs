//! One-sided (Hestenes) Jacobi SVD in double precision.
//!
//! The shorter side of the matrix is orthogonalised by plane rotations; the
//! singular vectors that the rotations do not produce (the null space, and
//! the columns belonging to zero singular values) are completed with a
//! Householder QR of the vectors that were produced.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Full SVD `S = U · diag(sigma) · Vt`.
///
/// Columns of `u` span the spectral subspace and rows of `vt` span the
/// temporal subspace. `sigma` is sorted in descending order and has
/// `min(C, T)` entries; values at or below the numerical rank threshold are
/// stored as exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    pub u: Array2<f64>,
    pub vt: Array2<f64>,
    pub sigma: Array1<f64>,
}

impl SubspaceDecomposition {
    pub fn rank(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// Rank-`d` approximation `U_d Σ_d Vt_d`.
    pub fn reconstruct(&self, d: usize) -> Array2<f64> {
        let d = d.min(self.sigma.len());
        let (c, t) = (self.u.nrows(), self.vt.ncols());
        let mut out = Array2::zeros((c, t));
        for k in 0..d {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            let u = self.u.column(k);
            let v = self.vt.row(k);
            for i in 0..c {
                let ui = u[i] * s;
                for j in 0..t {
                    out[[i, j]] += ui * v[j];
                }
            }
        }
        out
    }
}

/// Column-major dense matrix used as the Jacobi workspace.
struct Columns {
    rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(i < j);
        let r = self.rows;
        let (a, b) = self.data.split_at_mut(j * r);
        (&mut a[i * r..(i + 1) * r], &mut b[..r])
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Columns { rows: n, data }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xi, yi) = (*x, *y);
        *x = c * xi - s * yi;
        *y = s * xi + c * yi;
    }
}

/// Sweep cap: 100 · min(C, T).
pub fn max_sweeps(rows: usize, cols: usize) -> usize {
    100 * rows.min(cols).max(1)
}

/// Hestenes iteration on the columns of `g` (p × q, q ≤ p). Returns the
/// accumulated right rotation (q × q) and leaves `g` with mutually orthogonal
/// columns.
fn hestenes(g: &mut Columns, q: usize, cap: usize) -> Result<Columns> {
    let mut v = Columns::identity(q);
    let tol = f64::EPSILON * g.rows.max(1) as f64;
    for _sweep in 0..cap {
        let mut rotated = false;
        for i in 0..q {
            for j in i + 1..q {
                let alpha = dot(g.col(i), g.col(i));
                let beta = dot(g.col(j), g.col(j));
                let gamma = dot(g.col(i), g.col(j));
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (gi, gj) = g.pair_mut(i, j);
                rotate(gi, gj, c, s);
                let (vi, vj) = v.pair_mut(i, j);
                rotate(vi, vj, c, s);
            }
        }
        if !rotated {
            return Ok(v);
        }
    }
    Err(Error::Decomposition { sweeps: cap })
}

/// Extends `k` orthonormal columns of a p × k matrix to a full p × p
/// orthonormal basis; the first k columns are returned unchanged.
fn complete_basis(basis: &Array2<f64>) -> Array2<f64> {
    let (p, k) = basis.dim();
    let mut out = Array2::zeros((p, p));
    for j in 0..k {
        out.column_mut(j).assign(&basis.column(j));
    }
    if k == p {
        return out;
    }
    // Householder QR of the given columns; Q = H_0 … H_{k-1} and its trailing
    // p − k columns span the orthogonal complement.
    let mut a = basis.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..p).map(|i| a[[i, j]]).collect();
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for c in j..k {
            let proj: f64 = (j..p).map(|i| v[i - j] * a[[i, c]]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..p {
                a[[i, c]] -= proj * v[i - j];
            }
        }
        let scale = vnorm2.sqrt();
        v.iter_mut().for_each(|x| *x /= scale);
        reflectors.push(v);
    }
    for col in k..p {
        let mut e = vec![0.0; p];
        e[col] = 1.0;
        for (j, v) in reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let proj = 2.0 * dot(v, &e[j..]);
            for (x, vi) in e[j..].iter_mut().zip(v) {
                *x -= proj * vi;
            }
        }
        // re-orthogonalise against the given columns and everything so far
        for _ in 0..2 {
            for prev in 0..col {
                let c = out.column(prev);
                let proj: f64 = c.iter().zip(&e).map(|(a, b)| a * b).sum();
                for (x, ci) in e.iter_mut().zip(c.iter()) {
                    *x -= proj * ci;
                }
            }
        }
        let n = dot(&e, &e).sqrt();
        for i in 0..p {
            out[[i, col]] = e[i] / n;
        }
    }
    out
}

fn largest_magnitude_is_negative<'a>(values: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0f64;
    let mut negative = false;
    for &x in values {
        if x.abs() > best {
            best = x.abs();
            negative = x < 0.0;
        }
    }
    negative
}

/// Singular value decomposition of a real C × T matrix.
pub fn svd(s: ArrayView2<'_, f64>) -> Result<SubspaceDecomposition> {
    let (c, t) = s.dim();
    if c == 0 || t == 0 {
        return Err(Error::Shape(format!("cannot decompose a {c}x{t} matrix")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("matrix passed to svd"));
    }
    let transposed = t > c;
    let (p, q) = if transposed { (t, c) } else { (c, t) };
    let mut g = Columns {
        rows: p,
        data: Vec::with_capacity(p * q),
    };
    for j in 0..q {
        if transposed {
            g.data.extend(s.row(j).iter());
        } else {
            g.data.extend(s.column(j).iter());
        }
    }
    let v = hestenes(&mut g, q, max_sweeps(c, t))?;

    let norms: Vec<f64> = (0..q).map(|j| dot(g.col(j), g.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let sigma_max = norms[order[0]];
    let rank_tol = p as f64 * f64::EPSILON * sigma_max;

    let mut sigma = Array1::zeros(q);
    // left factor of G (p × q'), columns g_k / σ_k for the numerically nonzero σ
    let mut rank = 0;
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > rank_tol && sigma_max > 0.0 {
            sigma[dst] = norms[src];
            rank += 1;
        }
    }
    let mut g_left = Array2::zeros((p, rank));
    for (dst, &src) in order.iter().take(rank).enumerate() {
        let n = norms[src];
        for (i, x) in g.col(src).iter().enumerate() {
            g_left[[i, dst]] = x / n;
        }
    }
    let g_left = complete_basis(&g_left);
    // right factor of G (q × q) reordered to match sigma
    let mut g_right = Array2::zeros((q, q));
    for (dst, &src) in order.iter().enumerate() {
        for (i, x) in v.col(src).iter().enumerate() {
            g_right[[i, dst]] = *x;
        }
    }

    // G = g_left Σ g_rightᵀ, and G is either S or Sᵀ
    let (mut u, mut vt) = if transposed {
        (g_right, g_left.reversed_axes())
    } else {
        (g_left, g_right.reversed_axes())
    };

    let paired = c.min(t);
    for k in 0..c {
        if largest_magnitude_is_negative(u.column(k).iter()) {
            u.column_mut(k).mapv_inplace(|x| -x);
            if k < paired {
                vt.row_mut(k).mapv_inplace(|x| -x);
            }
        }
    }
    for k in paired..t {
        if largest_magnitude_is_negative(vt.row(k).iter()) {
            vt.row_mut(k).mapv_inplace(|x| -x);
        }
    }
    Ok(SubspaceDecomposition { u, vt, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let num = (a - b).mapv(|x| x * x).sum().sqrt();
        let den = a.mapv(|x| x * x).sum().sqrt();
        if den == 0.0 { num } else { num / den }
    }

    fn orthonormality_defect(q: &Array2<f64>) -> f64 {
        let g = q.t().dot(q);
        let n = g.nrows();
        (g - Array2::<f64>::eye(n)).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let d = svd(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(d.sigma.len(), 3);
        for s in &d.sigma {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let u = array![0.6, 0.0, 0.8];
        let v = array![0.5, 0.5, 0.5, 0.5];
        let s: Array2<f64> = Array2::from_shape_fn((3, 4), |(i, j)| 7.0 * u[i] * v[j]);
        let d = svd(s.view()).unwrap();
        assert!((d.sigma[0] - 7.0).abs() < 1e-12);
        assert_eq!(&d.sigma.as_slice().unwrap()[1..], &[0.0, 0.0]);
        assert_eq!(d.rank(), 1);
        assert!(orthonormality_defect(&d.u) < 1e-12);
        assert!(orthonormality_defect(&d.vt.t().to_owned()) < 1e-12);
        assert!(rel_frobenius(&s, &d.reconstruct(3)) < 1e-12);
        // sign convention: largest entry of every U column non-negative
        assert!(d.u[[2, 0]] > 0.0);
    }

    #[test]
    fn zero_matrix() {
        let d = svd(Array2::<f64>::zeros((4, 6)).view()).unwrap();
        assert!(d.sigma.iter().all(|&s| s == 0.0));
        assert!(orthonormality_defect(&d.u) < 1e-12);
        assert!(orthonormality_defect(&d.vt) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Array2::<f64>::zeros((2, 2));
        m[[0, 1]] = f64::NAN;
        assert!(matches!(svd(m.view()), Err(Error::NumericInput(_))));
    }

    #[test]
    fn shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (c, t) in [(1, 1), (1, 7), (7, 1), (5, 9), (9, 5), (12, 12)] {
            let s = Array2::from_shape_fn((c, t), |_| rng.random_range(-1.0..1.0));
            let d = svd(s.view()).unwrap();
            assert_eq!(d.u.dim(), (c, c));
            assert_eq!(d.vt.dim(), (t, t));
            assert_eq!(d.sigma.len(), c.min(t));
            assert!(d.sigma.windows(2).into_iter().all(|w| w[0] >= w[1]));
            assert!(rel_frobenius(&s, &d.reconstruct(c.min(t))) < 1e-12);
            assert!(orthonormality_defect(&d.u) < 1e-12);
            assert!(orthonormality_defect(&d.vt.t().to_owned()) < 1e-12);
            assert_eq!(svd(s.view()).unwrap(), d);
        }
    }

    #[test]
    fn duplicated_columns_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let s = ndarray::concatenate![ndarray::Axis(1), base, base];
        let d = svd(s.view()).unwrap();
        assert_eq!(d.rank(), 3);
        assert!(rel_frobenius(&s, &d.reconstruct(3)) < 1e-12);
        assert!(orthonormality_defect(&d.vt) < 1e-12);
    }
}
