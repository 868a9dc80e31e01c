//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each rotation first removes the phase of the pivot `a_pq` with a diagonal
//! unitary, then applies the classical real Jacobi rotation that zeroes it.
//! Sweeps run over all `p < q` pairs until the off-diagonal mass is below
//! machine precision relative to `‖A‖_F`.

use nalgebra::{DMatrix, DVector};

use crate::hermitian::{CMat, HermitianBlock, C64};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct Eigh {
    /// Ascending.
    pub values: DVector<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: CMat,
}

impl Eigh {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V diag(f(λ)) V^H`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        &scaled * self.vectors.adjoint()
    }
}

pub fn eigh(block: &HermitianBlock) -> Eigh {
    jacobi(block.to_dense())
}

/// Uses only the Hermitian part of `a`.
pub fn eigh_dense(a: &CMat) -> Eigh {
    assert_eq!(a.nrows(), a.ncols(), "eigh needs a square matrix");
    jacobi(HermitianBlock::hermitian_part(a).to_dense())
}

fn off_diagonal_sq(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s
}

fn jacobi(mut a: CMat) -> Eigh {
    let n = a.nrows();
    let mut v = CMat::identity(n, n);
    let scale_sq = a.norm_squared();
    if n > 1 && scale_sq > 0.0 {
        let target = (f64::EPSILON * f64::EPSILON) * scale_sq;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_sq(&a) <= target {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| diag[i]));
    let vectors = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Eigh { values, vectors }
}

fn rotate(a: &mut CMat, v: &mut CMat, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let phase = apq / r; // e^{iθ}
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // G = diag(1, e^{-iθ}) on (p,q) followed by the real rotation [[c, s], [-s, c]].
    let g_pp = C64::new(c, 0.0);
    let g_pq = C64::new(s, 0.0);
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;

    let n = a.nrows();
    // A ← A G (columns p, q)
    for i in 0..n {
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = aip * g_pp + aiq * g_qp;
        a[(i, q)] = aip * g_pq + aiq * g_qq;
    }
    // A ← G^H A (rows p, q)
    for j in 0..n {
        let apj = a[(p, j)];
        let aqj = a[(q, j)];
        a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
        a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
    for i in 0..n {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * g_pp + viq * g_qp;
        v[(i, q)] = vip * g_pq + viq * g_qq;
    }
}

/// Eigen-decomposition of a real symmetric matrix through the complex path.
pub fn eigh_real(a: &DMatrix<f64>) -> Eigh {
    eigh_dense(&a.map(|x| C64::new(x, 0.0)))
}
