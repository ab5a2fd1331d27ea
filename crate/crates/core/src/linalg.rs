//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Largest absolute deviation from Hermiticity, relative to the largest entry.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst / scale
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const TAYLOR_DEGREE: usize = 12;

/// Matrix exponential by scaling and squaring with a degree-12 Taylor core.
/// Intended for small matrices with modest norm (one integration step).
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = one_norm(a);
    let mut squarings = 0;
    if norm > 0.25 {
        squarings = (norm / 0.25).log2().ceil() as u32;
    }
    let scaled = a / Complex64::from(2f64.powi(squarings as i32));
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=TAYLOR_DEGREE {
        term = &term * &scaled / Complex64::from(k as f64);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Slightly negative eigenvalues from rounding are clamped to zero.
pub fn sqrtm_psd(m: &CMat) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let n = m.nrows();
    let roots = DVector::from_iterator(
        n,
        values.iter().map(|&v| Complex64::from(v.max(0.0).sqrt())),
    );
    let scaled = CMat::from_fn(n, n, |r, c| vectors[(r, c)] * roots[c]);
    scaled * vectors.adjoint()
}

/// Multiply a vector by a phase so that its largest-magnitude component is
/// real and positive.
pub fn fix_gauge(v: &mut CVec) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (k, z) in v.iter().enumerate() {
        // strict margin keeps the pick stable when two components tie
        if z.norm() > best_mag + 1e-12 {
            best = k;
            best_mag = z.norm();
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / v[best].norm();
        *v *= phase;
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}
