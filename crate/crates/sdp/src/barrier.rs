//! Phase-I feasibility for block-diagonal SDPs with linear coupling.
//!
//! Decision variables are Hermitian blocks `X_b ⪰ 0`; constraints are
//! `Σ_b tr(C_ib X_b) + d_i ≥ 0`. Rows are rescaled to unit size, then the
//! margin problem
//!
//!   maximize s  s.t.  row_i(X) ≥ s,  X_b ≻ 0
//!
//! is followed along the central path of
//! `−t·s − Σ log(row_i − s) − Σ log det X_b`. Any iterate with `s ≥ 0` is a
//! feasible point. At an (approximately) centred point the duality gap is
//! `θ/t`, with `θ = #rows + Σ dim_b`, so `s + θ/t < 0` certifies infeasibility.
//!
//! The Hessian is block-diagonal (`Y ↦ X⁻¹ Y X⁻¹`) plus one rank-one term per
//! row, so Newton directions come from a Woodbury solve of size `#rows`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::hermitian::{CMat, HermitianBlock, C64};
use crate::SdpError;

/// Hermitian linear form `Σ_b tr(C_b X_b) + constant`, read as `≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearForm {
    pub terms: Vec<(usize, HermitianBlock)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn new(constant: f64) -> Self {
        Self { terms: Vec::new(), constant }
    }

    pub fn with_term(mut self, block: usize, coeff: HermitianBlock) -> Self {
        self.terms.push((block, coeff));
        self
    }

    /// Adds a dense coefficient, rejecting non-Hermitian input.
    pub fn with_dense_term(self, block: usize, coeff: &CMat) -> Result<Self, SdpError> {
        let h = HermitianBlock::from_dense(coeff, 1e-10)?;
        Ok(self.with_term(block, h))
    }

    pub fn evaluate(&self, blocks: &[HermitianBlock]) -> f64 {
        self.constant + self.terms.iter().map(|(b, c)| c.inner(&blocks[*b])).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    dims: Vec<usize>,
    rows: Vec<LinearForm>,
}

impl FeasibilityProblem {
    pub fn new(dims: Vec<usize>) -> Self {
        Self { dims, rows: Vec::new() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn constraints(&self) -> &[LinearForm] {
        &self.rows
    }

    pub fn add(&mut self, form: LinearForm) -> Result<(), SdpError> {
        for (b, c) in &form.terms {
            let dim = *self.dims.get(*b).ok_or(SdpError::BlockIndex { index: *b, blocks: self.dims.len() })?;
            if c.dim() != dim {
                return Err(SdpError::DimensionMismatch { block: *b, expected: dim, found: c.dim() });
            }
        }
        if !form.constant.is_finite() || form.terms.iter().any(|(_, c)| !c.frobenius_norm().is_finite()) {
            return Err(SdpError::NonFinite);
        }
        self.rows.push(form);
        Ok(())
    }

    /// Smallest constraint value at `blocks` (no rescaling).
    pub fn min_margin(&self, blocks: &[HermitianBlock]) -> f64 {
        self.rows.iter().map(|r| r.evaluate(blocks)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Initial barrier weight.
    pub t0: f64,
    /// Multiplicative update of `t` between centring stages.
    pub growth: f64,
    /// Centring stops when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    /// Total Newton steps before giving up with `Undecided`.
    pub max_newton: usize,
    /// Width of the ambiguous band around zero optimal margin.
    pub tol: f64,
    /// Starting point `X_b = scale · I`.
    pub initial_scale: f64,
    /// Adds `Σ_b tr X_b ≤ trace_bound` so the barrier problem has a minimiser.
    /// `None` uses `1e6 · initial_scale · Σ dim_b`.
    pub trace_bound: Option<f64>,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 10.0,
            newton_tol: 1e-9,
            max_newton: 200,
            tol: 1e-7,
            initial_scale: 1.0,
            trace_bound: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Assignment {
    pub blocks: Vec<HermitianBlock>,
    /// Smallest rescaled constraint value at `blocks`; nonnegative.
    pub margin: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Feasible(Assignment),
    /// `slack_bound` is an upper bound on the best achievable rescaled margin.
    Infeasible { slack_bound: f64, newton_steps: usize },
    /// Step cap reached, or the optimal margin lies inside `(-tol, tol)`.
    Undecided { best_margin: f64, newton_steps: usize },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }

    pub fn newton_steps(&self) -> usize {
        match self {
            Verdict::Feasible(a) => a.newton_steps,
            Verdict::Infeasible { newton_steps, .. } | Verdict::Undecided { newton_steps, .. } => *newton_steps,
        }
    }
}

struct Row {
    terms: Vec<(usize, CMat)>,
    constant: f64,
}

/// Re tr(A B) for Hermitian A, B.
fn hinner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

fn row_value(row: &Row, x: &[CMat]) -> f64 {
    row.constant + row.terms.iter().map(|(b, c)| hinner(c, &x[*b])).sum::<f64>()
}

struct Factored {
    inv: Vec<CMat>,
    logdet: f64,
}

fn factor(x: &[CMat]) -> Option<Factored> {
    let mut inv = Vec::with_capacity(x.len());
    let mut logdet = 0.0;
    for xb in x {
        let ch = crate::hermitian::hpd_cholesky(xb)?;
        let l = ch.l_dirty();
        for i in 0..xb.nrows() {
            let d = l[(i, i)].re;
            logdet += 2.0 * d.ln();
        }
        inv.push(ch.inverse());
    }
    Some(Factored { inv, logdet })
}

fn symmetrize(a: &mut CMat) {
    let h = (&*a + a.adjoint()) * C64::new(0.5, 0.0);
    *a = h;
}

pub fn barrier_feasibility(problem: &FeasibilityProblem, opts: &BarrierOptions) -> Verdict {
    let dims = &problem.dims;
    let total_dim: usize = dims.iter().sum();

    let mut rows: Vec<Row> = Vec::new();
    for form in &problem.rows {
        let coef_norm = form.terms.iter().map(|(_, c)| c.frobenius_norm()).fold(0.0, f64::max);
        let scale = coef_norm.max(form.constant.abs());
        if scale == 0.0 {
            continue; // 0 ≥ 0
        }
        if coef_norm == 0.0 && form.constant < 0.0 {
            return Verdict::Infeasible { slack_bound: -1.0, newton_steps: 0 };
        }
        if coef_norm == 0.0 {
            continue;
        }
        let terms = form
            .terms
            .iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(b, c)| (*b, c.to_dense() / C64::new(scale, 0.0)))
            .collect();
        rows.push(Row { terms, constant: form.constant / scale });
    }

    if total_dim == 0 || rows.is_empty() {
        let blocks: Vec<HermitianBlock> = dims.iter().map(|&d| HermitianBlock::zeros(d)).collect();
        let margin = problem.min_margin(&blocks);
        return if margin >= 0.0 || problem.rows.is_empty() {
            Verdict::Feasible(Assignment { blocks, margin: margin.min(1.0), newton_steps: 0 })
        } else {
            Verdict::Infeasible { slack_bound: margin, newton_steps: 0 }
        };
    }

    let x0 = opts.initial_scale;
    let bound = opts.trace_bound.unwrap_or(1e6 * x0 * total_dim as f64);
    rows.push(Row {
        terms: dims
            .iter()
            .enumerate()
            .map(|(b, &d)| (b, CMat::identity(d, d) * C64::new(-1.0 / bound, 0.0)))
            .collect(),
        constant: 1.0,
    });
    let theta = (rows.len() + total_dim) as f64;
    let p = rows.len();

    // Per-block list of (row, coefficient) for the Woodbury assembly.
    let mut by_block: Vec<Vec<(usize, &CMat)>> = vec![Vec::new(); dims.len()];
    for (i, r) in rows.iter().enumerate() {
        for (b, c) in &r.terms {
            by_block[*b].push((i, c));
        }
    }

    let mut x: Vec<CMat> = dims.iter().map(|&d| CMat::identity(d, d) * C64::new(x0, 0.0)).collect();
    let vals: Vec<f64> = rows.iter().map(|r| row_value(r, &x)).collect();
    let mut s = vals.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut t = opts.t0;
    let mut steps = 0usize;

    let objective = |x: &[CMat], s: f64, t: f64| -> Option<f64> {
        let f = factor(x)?;
        let mut acc = -t * s - f.logdet;
        for r in &rows {
            let v = row_value(r, x) - s;
            if !(v > 0.0) {
                return None;
            }
            acc -= v.ln();
        }
        Some(acc)
    };

    loop {
        // centring at the current t
        loop {
            let f = match factor(&x) {
                Some(f) => f,
                None => return Verdict::Undecided { best_margin: s, newton_steps: steps },
            };
            let resid: Vec<f64> = rows.iter().map(|r| row_value(r, &x) - s).collect();

            if s >= 0.0 {
                if let Some(a) = accept(problem, &x, &rows, steps) {
                    return Verdict::Feasible(a);
                }
            }

            let w: Vec<f64> = resid.iter().map(|r| 1.0 / (r * r)).collect();
            // gradient
            let mut g_x: Vec<CMat> = f.inv.iter().map(|xi| -xi.clone()).collect();
            for (i, r) in rows.iter().enumerate() {
                let c = C64::new(-1.0 / resid[i], 0.0);
                for (b, coef) in &r.terms {
                    g_x[*b] += coef * c;
                }
            }
            let g_s = -t + resid.iter().map(|r| 1.0 / r).sum::<f64>();

            // U_i = X C_i X per block
            let mut u: Vec<Vec<(usize, CMat)>> = vec![Vec::new(); dims.len()];
            for (b, list) in by_block.iter().enumerate() {
                for (i, c) in list {
                    let mut m = &x[b] * *c * &x[b];
                    symmetrize(&mut m);
                    u[b].push((*i, m));
                }
            }
            let mut smat = DMatrix::<f64>::zeros(p, p);
            for i in 0..p {
                smat[(i, i)] = resid[i] * resid[i];
            }
            for (b, list) in by_block.iter().enumerate() {
                for (a_idx, (i, c)) in list.iter().enumerate() {
                    for (j, uj) in u[b].iter().skip(a_idx) {
                        let v = hinner(c, uj);
                        smat[(*i, *j)] += v;
                        if i != j {
                            smat[(*j, *i)] += v;
                        }
                    }
                }
            }
            let chol = match Cholesky::<f64, Dyn>::new(smat) {
                Some(c) => c,
                None => return Verdict::Undecided { best_margin: s, newton_steps: steps },
            };
            let apply_ainv = |v: &[CMat]| -> Vec<CMat> {
                let mut y: Vec<CMat> = v.iter().zip(&x).map(|(vb, xb)| xb * vb * xb).collect();
                y.iter_mut().for_each(symmetrize);
                let mut z = DVector::<f64>::zeros(p);
                for (i, r) in rows.iter().enumerate() {
                    z[i] = r.terms.iter().map(|(b, c)| hinner(c, &y[*b])).sum();
                }
                let coef = chol.solve(&z);
                for (b, list) in u.iter().enumerate() {
                    for (i, ui) in list {
                        y[b] -= ui * C64::new(coef[*i], 0.0);
                    }
                }
                y
            };
            let neg_g: Vec<CMat> = g_x.iter().map(|g| -g.clone()).collect();
            let mut bvec: Vec<CMat> = dims.iter().map(|&d| CMat::zeros(d, d)).collect();
            for (i, r) in rows.iter().enumerate() {
                for (b, c) in &r.terms {
                    bvec[*b] -= c * C64::new(w[i], 0.0);
                }
            }
            let x1 = apply_ainv(&neg_g);
            let x2 = apply_ainv(&bvec);
            let cww: f64 = w.iter().sum();
            let b_x1: f64 = bvec.iter().zip(&x1).map(|(a, b)| hinner(a, b)).sum();
            let b_x2: f64 = bvec.iter().zip(&x2).map(|(a, b)| hinner(a, b)).sum();
            let ds = (-g_s - b_x1) / (cww - b_x2);
            let dx: Vec<CMat> = x1.iter().zip(&x2).map(|(a, b)| a - b * C64::new(ds, 0.0)).collect();
            let slope: f64 = g_x.iter().zip(&dx).map(|(g, d)| hinner(g, d)).sum::<f64>() + g_s * ds;
            let decrement_sq = -slope;
            if !decrement_sq.is_finite() {
                return Verdict::Undecided { best_margin: s, newton_steps: steps };
            }
            if decrement_sq / 2.0 <= opts.newton_tol {
                break;
            }

            let f0 = objective(&x, s, t).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let xn: Vec<CMat> = x.iter().zip(&dx).map(|(a, d)| a + d * C64::new(alpha, 0.0)).collect();
                let sn = s + alpha * ds;
                if let Some(fn_) = objective(&xn, sn, t) {
                    if fn_ <= f0 + 0.01 * alpha * slope {
                        x = xn;
                        s = sn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            steps += 1;
            if steps >= opts.max_newton {
                if s >= 0.0 {
                    if let Some(a) = accept(problem, &x, &rows, steps) {
                        return Verdict::Feasible(a);
                    }
                }
                return Verdict::Undecided { best_margin: s, newton_steps: steps };
            }
            if !moved {
                break;
            }
        }

        if s >= 0.0 {
            if let Some(a) = accept(problem, &x, &rows, steps) {
                return Verdict::Feasible(a);
            }
        }
        let gap = 1.1 * theta / t;
        if s + gap < 0.0 {
            return Verdict::Infeasible { slack_bound: s + gap, newton_steps: steps };
        }
        if gap < opts.tol {
            return Verdict::Undecided { best_margin: s, newton_steps: steps };
        }
        t *= opts.growth;
    }
}

/// Post-check: every block positive semidefinite and every original row
/// nonnegative up to rounding.
fn accept(problem: &FeasibilityProblem, x: &[CMat], rows: &[Row], steps: usize) -> Option<Assignment> {
    let blocks: Vec<HermitianBlock> = x.iter().map(HermitianBlock::hermitian_part).collect();
    for b in &blocks {
        if b.dim() > 0 && crate::psd::min_eigenvalue(b) < -1e-12 * b.trace().abs().max(1e-300) {
            return None;
        }
    }
    let scaled_margin = rows.iter().map(|r| row_value(r, x)).fold(f64::INFINITY, f64::min);
    for form in &problem.rows {
        let v = form.evaluate(&blocks);
        let scale = form
            .terms
            .iter()
            .map(|(_, c)| c.frobenius_norm())
            .fold(form.constant.abs(), f64::max);
        if v < -1e-12 * scale.max(1e-300) {
            return None;
        }
    }
    Some(Assignment { blocks, margin: scaled_margin, newton_steps: steps })
}
