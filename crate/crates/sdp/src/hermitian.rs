use nalgebra::{Cholesky, Complex, DMatrix, Dyn};

use crate::SdpError;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Hermitian matrix stored as its upper triangle, so `A == A^H` holds by
/// construction. Diagonal entries are real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBlock {
    dim: usize,
    diag: Vec<f64>,
    // strict upper triangle, row-major: (0,1), (0,2), .., (1,2), ..
    upper: Vec<C64>,
}

impl HermitianBlock {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            diag: vec![0.0; dim],
            upper: vec![C64::new(0.0, 0.0); dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        let mut out = Self::zeros(dim);
        out.diag.iter_mut().for_each(|d| *d = value);
        out
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        let mut out = Self::zeros(values.len());
        out.diag.copy_from_slice(values);
        out
    }

    /// Builds from a dense matrix, rejecting inputs whose deviation from
    /// conjugate symmetry exceeds `tol · max(1, ‖A‖_F)`. The stored value is
    /// the Hermitian part `(A + A^H)/2`.
    pub fn from_dense(a: &CMat, tol: f64) -> Result<Self, SdpError> {
        if a.nrows() != a.ncols() {
            return Err(SdpError::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        let dev = (a - a.adjoint()).norm();
        let scale = a.norm().max(1.0);
        if dev > tol * scale {
            return Err(SdpError::NotHermitian { deviation: dev });
        }
        Ok(Self::hermitian_part(a))
    }

    /// `(A + A^H)/2` without any symmetry check.
    pub fn hermitian_part(a: &CMat) -> Self {
        let n = a.nrows();
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.diag[i] = a[(i, i)].re;
            for j in (i + 1)..n {
                let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                let idx = out.upper_index(i, j);
                out.upper[idx] = v;
            }
        }
        out
    }

    /// `X^H X`-style outer product `v v^H` for a column vector.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        let mut out = Self::zeros(n);
        for i in 0..n {
            out.diag[i] = v[i].norm_sqr();
            for j in (i + 1)..n {
                let idx = out.upper_index(i, j);
                out.upper[idx] = v[i] * v[j].conj();
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        // rows 0..i contribute (dim-1) + (dim-2) + .. + (dim-i) entries
        i * (2 * self.dim - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => C64::new(self.diag[i], 0.0),
            std::cmp::Ordering::Less => self.upper[self.upper_index(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.upper_index(j, i)].conj(),
        }
    }

    /// Sets entry (i,j) and, implicitly, (j,i) to the conjugate. Diagonal
    /// writes keep only the real part.
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.diag[i] = value.re,
            std::cmp::Ordering::Less => {
                let idx = self.upper_index(i, j);
                self.upper[idx] = value;
            }
            std::cmp::Ordering::Greater => {
                let idx = self.upper_index(j, i);
                self.upper[idx] = value.conj();
            }
        }
    }

    pub fn to_dense(&self) -> CMat {
        CMat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|x| x * x).sum();
        let u: f64 = self.upper.iter().map(|z| z.norm_sqr()).sum();
        (d + 2.0 * u).sqrt()
    }

    /// Real inner product `tr(A B)` (real because both are Hermitian).
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d: f64 = self.diag.iter().zip(&other.diag).map(|(a, b)| a * b).sum();
        let u: f64 = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        d + 2.0 * u
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            diag: self.diag.iter().map(|x| x * c).collect(),
            upper: self.upper.iter().map(|z| z * c).collect(),
        }
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        Self {
            dim: self.dim,
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + c * b).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.diag.iter().all(|&d| d == 0.0) && self.upper.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// Cholesky factor of the Hermitian part of `a`, or `None` unless it is
/// positive definite.
///
/// A negative pivot that picks up a rounding-level imaginary part has a
/// complex square root with a small positive real part, so the diagonal of
/// `L` must also be checked for being real.
pub fn hpd_cholesky(a: &CMat) -> Option<Cholesky<C64, Dyn>> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let ch = Cholesky::new(h)?;
    let l = ch.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-8 * d.re {
            return None;
        }
    }
    Some(ch)
}

#[cfg(test)]
mod tests {
    #[test]
    fn cholesky_rejects_indefinite_with_complex_rounding() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(3.0, -1.0), C64::new(3.0, 1.0), C64::new(-1.9, 1e-13)],
        );
        assert!(hpd_cholesky(&a).is_none());
        let b = CMat::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.5, 0.2), C64::new(0.5, -0.2), C64::new(1.0, 0.0)]);
        assert!(hpd_cholesky(&b).is_some());
    }

    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn set_mirrors_conjugate() {
        let mut h = HermitianBlock::zeros(3);
        h.set(0, 2, c(1.0, 2.0));
        assert_eq!(h.get(2, 0), c(1.0, -2.0));
        h.set(2, 1, c(0.5, -1.0));
        assert_eq!(h.get(1, 2), c(0.5, 1.0));
        let d = h.to_dense();
        assert_eq!(d.clone(), d.adjoint());
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianBlock::from_dense(&a, 1e-12), Err(SdpError::NotHermitian { .. })));
    }

    #[test]
    fn inner_matches_dense_trace() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -2.0), c(0.0, 2.0), c(-1.0, 0.0)]);
        let ha = HermitianBlock::from_dense(&a, 1e-12).unwrap();
        let hb = HermitianBlock::from_dense(&b, 1e-12).unwrap();
        let dense = (&a * &b).trace();
        assert!((ha.inner(&hb) - dense.re).abs() < 1e-14);
        assert!(dense.im.abs() < 1e-14);
        assert!((ha.frobenius_norm() - a.norm()).abs() < 1e-14);
    }

    #[test]
    fn upper_index_is_dense_packing() {
        let h = HermitianBlock::zeros(5);
        let mut seen = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                seen.push(h.upper_index(i, j));
            }
        }
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
