//! Dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub use nalgebra::Complex;
pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `diag(0, 1, …, N−1)` applied to a matrix from the left.
pub fn index_weighted(a: &CMat) -> CMat {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= c(i as f64);
    }
    out
}

/// Solve `G X = B` for Hermitian positive definite `G`.
pub fn hpd_solve(g: &CMat, b: &CMat) -> Option<CMat> {
    sdp_kernel::hpd_cholesky(g).map(|ch| ch.solve(b))
}

/// Left pseudo-inverse `(A^H A)^{-1} A^H` for full column rank `A`.
pub fn left_pinv(a: &CMat) -> Option<CMat> {
    hpd_solve(&(a.adjoint() * a), &a.adjoint())
}

pub fn wrap_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = (x + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if y >= std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Squared 2-norm (largest singular value squared).
pub fn spectral_norm_sq(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() { a * a.adjoint() } else { a.adjoint() * a };
    sdp_kernel::eigh_dense(&gram).max().max(0.0)
}
