//! Dense complex linear algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const RANK_REL_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn rank_with(s: &[f64], rel: f64) -> usize {
    let max = s.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel * max).count()
}

/// Numerical rank with relative threshold `rel·σ_max`.
pub fn rank(m: &CMat, rel: f64) -> usize {
    rank_with(&singular_values(m), rel)
}

pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn min_singular(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn cond(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of the column space, threshold `rel·σ_max`.
pub fn column_space(m: &CMat, rel: f64) -> CMat {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested u");
    let s = &svd.singular_values;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| max > 0.0 && s[i] > rel * max).collect();
    CMat::from_fn(m.nrows(), keep.len(), |r, j| u[(r, keep[j])])
}

/// Orthonormal basis of the null space, threshold `rel·σ_max`.
pub fn null_space(m: &CMat, rel: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let rows = m.nrows().max(n);
    let mut sq = CMat::zeros(rows, n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let s = &svd.singular_values;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..s.len()).filter(|&i| max == 0.0 || s[i] <= rel * max).collect();
    CMat::from_fn(n, null.len(), |r, j| vt[(null[j], r)].conj())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()) * re(0.5);
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), idx.len(), |r, j| eig.eigenvectors[(r, idx[j])]);
    (vals, vecs)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Matrix sign function by scaled Newton iteration `X ← (μX + (μX)⁻¹)/2`.
pub fn matrix_sign(m: &CMat) -> Option<CMat> {
    let n = m.nrows();
    let mut x = m.clone();
    for _ in 0..100 {
        let inv = x.clone().try_inverse()?;
        let mu = (op_norm(&inv) / op_norm(&x)).sqrt();
        let mu = if mu.is_finite() && mu > 0.0 { mu } else { 1.0 };
        let next = (&x * re(mu) + inv * re(1.0 / mu)) * re(0.5);
        let delta = max_abs(&(&next - &x));
        x = next;
        if delta < 1e-14 * (n as f64) {
            break;
        }
    }
    let check = max_abs(&(&x * &x - CMat::identity(n, n)));
    (check < 1e-9).then_some(x)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn anticomm(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_rvec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_null_space_of_rank_one() {
        let v = CVec::from_vec(vec![re(1.0), c(0.0, 2.0), re(-1.0)]);
        let m = &v * v.adjoint();
        assert_eq!(rank(&m, RANK_REL_TOL), 1);
        let k = null_space(&m, RANK_REL_TOL);
        assert_eq!(k.ncols(), 2);
        assert!(max_abs(&(&m * &k)) < 1e-12);
    }

    #[test]
    fn wide_matrix_null_space() {
        let m = CMat::from_row_slice(1, 3, &[re(1.0), re(1.0), re(0.0)]);
        let k = null_space(&m, RANK_REL_TOL);
        assert_eq!(k.ncols(), 2);
        assert!(max_abs(&(&m * &k)) < 1e-14);
    }

    #[test]
    fn sign_of_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![re(0.3), re(-2.0), re(5.0)]));
        let s = matrix_sign(&m).unwrap();
        let expect = CMat::from_diagonal(&CVec::from_vec(vec![re(1.0), re(-1.0), re(1.0)]));
        assert!(max_abs(&(s - expect)) < 1e-12);
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let m = CMat::from_row_slice(2, 2, &[re(2.0), c(0.0, 1.0), c(0.0, -1.0), re(2.0)]);
        let (vals, _) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }
}
