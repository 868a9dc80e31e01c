//! Max-min weight control by semidefinite relaxation and bisection, plus the
//! water-filling and equal-power baselines and user-centric AP selection.
//!
//! With `Γ_mk = γ_mk γ_mk^H` every closed-form term is linear in `Γ`:
//! `‖Ξ_mkj γ_mj‖² = tr(Ξ_mkj^H Ξ_mkj Γ_mj)` where
//! `Ξ_mkj = B̂_mk^H Â_mk^H G̃_mj` and `G̃` is the effective block. Dropping the
//! rank constraint leaves one feasibility SDP per target `μ`.

use sdp_kernel::{barrier_feasibility, eigh_dense, BarrierOptions, FeasibilityProblem, HermitianBlock, LinearForm, Verdict};

use crate::beamforming::{
    assemble, downlink_weights_from_shares, equal_power_weights, uplink_default_weights, BeamformerSet, BlockSet, Direction,
    ServiceMask, Uncertainty, Weights,
};
use crate::config::SystemConfig;
use crate::estimation::MultipathEstimate;
use crate::linalg::{c, index_weighted, spectral_norm_sq, CMat, CVec};
use crate::performance::coupling;
use crate::CoreError;

/// How the uncertainty terms (Ω on the downlink, Λ on the uplink) enter the
/// feasibility rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertaintyModel {
    /// Evaluated once at the baseline weights and held constant.
    #[default]
    Fixed,
    /// Kept as the quadratic form it is, i.e. linear in `Γ`.
    Exact,
}

#[derive(Debug, Clone)]
pub struct AllocationOptions {
    /// Relative bisection tolerance.
    pub epsilon: f64,
    pub barrier: BarrierOptions,
    pub uncertainty: UncertaintyModel,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, barrier: BarrierOptions::default(), uncertainty: UncertaintyModel::Fixed }
    }
}

/// Coefficient data of the relaxed max-min problem for one instance.
#[derive(Debug, Clone)]
pub struct SdrProblem {
    pub direction: Direction,
    pub num_aps: usize,
    pub num_users: usize,
    pub paths: usize,
    /// `ρ_d` or `ρ_u`
    pub power: f64,
    pub noise_var: f64,
    pub mask: ServiceMask,
    pub model: UncertaintyModel,
    /// `Ξ^H Ξ`, index `(m·K + k)·K + j`
    gain: Vec<CMat>,
    /// uncertainty quadratic forms, same indexing (exact model)
    unc: Vec<CMat>,
    /// per user, held-constant uncertainty sum (fixed model)
    unc_fixed: Vec<f64>,
    /// per (m,k): `G̃^H G̃` with `G̃` the normalised block (power rows)
    budget: Vec<CMat>,
    /// per (m,k): `Ĉ^H Ĉ` (uplink noise), empty on the downlink
    noise_form: Vec<CMat>,
    /// `‖Â_mk B̂_mk‖₂²` per (m,k)
    peak_gain: Vec<f64>,
}

impl SdrProblem {
    fn gi(&self, m: usize, k: usize, j: usize) -> usize {
        (m * self.num_users + k) * self.num_users + j
    }

    /// Served pairs in variable order.
    pub fn variables(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for m in 0..self.num_aps {
            for k in 0..self.num_users {
                if self.mask.get(m, k) {
                    v.push((m, k));
                }
            }
        }
        v
    }

    /// Interference-free bound on the achievable min-SINR.
    pub fn mu_upper_bound(&self) -> f64 {
        let (mm, kk) = (self.num_aps, self.num_users);
        let mut bound = f64::INFINITY;
        for k in 0..kk {
            let served: Vec<usize> = (0..mm).filter(|&m| self.mask.get(m, k)).collect();
            let b = match self.direction {
                Direction::Downlink => {
                    let s: f64 = served.iter().map(|&m| self.peak_gain[m * kk + k]).sum();
                    let u = if self.model == UncertaintyModel::Fixed { self.unc_fixed[k] } else { 0.0 };
                    self.power * s / (self.power * u + self.noise_var)
                }
                Direction::Uplink => {
                    let s = served.iter().map(|&m| self.peak_gain[m * kk + k]).fold(0.0, f64::max);
                    self.power * s / self.noise_var
                }
            };
            bound = bound.min(b);
        }
        if bound.is_finite() {
            bound
        } else {
            0.0
        }
    }

    /// Feasibility system for target `μ`.
    pub fn feasibility(&self, mu: f64) -> Result<FeasibilityProblem, CoreError> {
        let vars = self.variables();
        let kk = self.num_users;
        let mut index = vec![usize::MAX; self.num_aps * kk];
        for (v, &(m, k)) in vars.iter().enumerate() {
            index[m * kk + k] = v;
        }
        let mut problem = FeasibilityProblem::new(vec![self.paths; vars.len()]);
        let exact = self.model == UncertaintyModel::Exact;
        let ul = self.direction == Direction::Uplink;
        for k in 0..kk {
            let constant = match (self.direction, exact) {
                (Direction::Downlink, false) => -mu * (self.power * self.unc_fixed[k] + self.noise_var),
                (Direction::Downlink, true) => -mu * self.noise_var,
                (Direction::Uplink, false) => -mu * self.power * self.unc_fixed[k],
                (Direction::Uplink, true) => 0.0,
            };
            let mut row = LinearForm::new(constant);
            for (v, &(m, j)) in vars.iter().enumerate() {
                let i = self.gi(m, k, j);
                let mut coef = if j == k { &self.gain[i] * c(self.power) } else { &self.gain[i] * c(-mu * self.power) };
                if exact {
                    coef -= &self.unc[i] * c(mu * self.power);
                }
                if ul && j == k {
                    coef -= &self.noise_form[m * kk + k] * c(mu * self.noise_var);
                }
                row = row.with_term(v, HermitianBlock::hermitian_part(&coef));
            }
            problem.add(row)?;
        }
        for m in 0..self.num_aps {
            let mut row = LinearForm::new(1.0);
            for k in 0..kk {
                if self.mask.get(m, k) {
                    row = row.with_term(index[m * kk + k], HermitianBlock::hermitian_part(&(&self.budget[m * kk + k] * c(-1.0))));
                }
            }
            problem.add(row)?;
        }
        Ok(problem)
    }

    /// Barrier starting point that uses half of the tightest AP budget.
    pub fn barrier_options(&self, base: &BarrierOptions) -> BarrierOptions {
        let kk = self.num_users;
        let mut worst: f64 = 0.0;
        for m in 0..self.num_aps {
            let s: f64 = (0..kk).filter(|&k| self.mask.get(m, k)).map(|k| self.budget[m * kk + k].trace().re).sum();
            worst = worst.max(s);
        }
        BarrierOptions { initial_scale: if worst > 0.0 { 0.5 / worst } else { 1.0 }, ..base.clone() }
    }

    /// Per-AP budget use `Σ_k tr(G̃^H G̃ Γ_mk)/‖G̃‖_F²` at `Γ` (variable order).
    pub fn budget_use(&self, gamma: &[CMat]) -> Vec<f64> {
        let mut used = vec![0.0; self.num_aps];
        for (v, &(m, k)) in self.variables().iter().enumerate() {
            used[m] += (&self.budget[m * self.num_users + k] * &gamma[v]).trace().re;
        }
        used
    }

    /// Closed-form SINRs implied by the relaxed rows at `Γ` (rank-one `Γ`
    /// reproduces the closed forms when the exact model is used).
    pub fn relaxed_sinr(&self, gamma: &[CMat]) -> Vec<f64> {
        let vars = self.variables();
        let kk = self.num_users;
        (0..kk)
            .map(|k| {
                let (mut s, mut i, mut u, mut n) = (0.0, 0.0, 0.0, 0.0);
                for (v, &(m, j)) in vars.iter().enumerate() {
                    let g = self.gi(m, k, j);
                    let q = |a: &CMat| (a * &gamma[v]).trace().re;
                    if j == k {
                        s += q(&self.gain[g]);
                        if self.direction == Direction::Uplink {
                            n += q(&self.noise_form[m * kk + k]);
                        }
                    } else {
                        i += q(&self.gain[g]);
                    }
                    if self.model == UncertaintyModel::Exact {
                        u += q(&self.unc[g]);
                    }
                }
                if self.model == UncertaintyModel::Fixed {
                    u = self.unc_fixed[k];
                }
                let noise = if self.direction == Direction::Downlink { self.noise_var } else { self.noise_var * n };
                self.power * s / (self.power * (i + u) + noise)
            })
            .collect()
    }
}

/// Builds the coefficient data. `baseline` supplies the vectors at which the
/// fixed uncertainty sums are evaluated.
pub fn build_sdr(
    est: &MultipathEstimate,
    blocks: &BlockSet,
    unc: &Uncertainty,
    baseline: &BeamformerSet,
    mask: &ServiceMask,
    config: &SystemConfig,
    model: UncertaintyModel,
) -> SdrProblem {
    let (mm, kk, n) = (est.num_aps, est.num_users, est.antennas);
    let l = config.num_paths;
    let direction = blocks.direction;
    let eff: Vec<CMat> = (0..mm * kk).map(|i| blocks.effective(i / kk, i % kk)).collect();
    let mut gain = Vec::with_capacity(mm * kk * kk);
    let mut unc_forms = Vec::new();
    for m in 0..mm {
        let effs: Vec<&CMat> = (0..kk).map(|j| &eff[m * kk + j]).collect();
        let e_effs: Vec<CMat> = if model == UncertaintyModel::Exact { effs.iter().map(|g| index_weighted(g)).collect() } else { Vec::new() };
        for k in 0..kk {
            let link = est.link(m, k);
            let a = link.steering(n);
            let bh_ah = link.steering_gain(n).adjoint();
            let ah = a.adjoint();
            let (su, sb) = unc.get(m, k);
            for j in 0..kk {
                let xi = &bh_ah * effs[j];
                gain.push(xi.adjoint() * &xi);
                if model == UncertaintyModel::Exact {
                    let e1 = &bh_ah * &e_effs[j];
                    let e2 = &ah * effs[j];
                    let e3 = &ah * &e_effs[j];
                    unc_forms.push(
                        e1.adjoint() * e1 * c(su) + e2.adjoint() * e2 * c(sb) + e3.adjoint() * e3 * c(sb * su),
                    );
                }
            }
        }
    }
    let cp = coupling(est, baseline, unc);
    let unc_fixed = (0..kk)
        .map(|k| (0..mm).map(|m| (0..kk).map(|j| cp.uncertainty(m, k, j)).sum::<f64>()).sum())
        .collect();
    let budget = (0..mm * kk)
        .map(|i| {
            let b = blocks.block(i / kk, i % kk);
            let f = b.norm_squared();
            if f > 0.0 {
                b.adjoint() * b * c(1.0 / f)
            } else {
                CMat::zeros(l, l)
            }
        })
        .collect();
    let noise_form = match direction {
        Direction::Uplink => eff.iter().map(|g| g.adjoint() * g).collect(),
        Direction::Downlink => Vec::new(),
    };
    let peak_gain = est.links().iter().map(|link| spectral_norm_sq(&link.steering_gain(n))).collect();
    SdrProblem {
        direction,
        num_aps: mm,
        num_users: kk,
        paths: l,
        power: match direction {
            Direction::Downlink => config.dl_power,
            Direction::Uplink => config.ul_power,
        },
        noise_var: config.noise_var,
        mask: mask.clone(),
        model,
        gain,
        unc: unc_forms,
        unc_fixed,
        budget,
        noise_form,
        peak_gain,
    }
}

/// Feasible assignment, certified or assumed infeasibility.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(Vec<CMat>),
    Infeasible,
    Undecided,
}

pub fn solve_feasibility(problem: &FeasibilityProblem, opts: &BarrierOptions) -> Feasibility {
    match barrier_feasibility(problem, opts) {
        Verdict::Feasible(a) => Feasibility::Feasible(a.blocks.iter().map(|b| b.to_dense()).collect()),
        Verdict::Infeasible { .. } => Feasibility::Infeasible,
        Verdict::Undecided { .. } => Feasibility::Undecided,
    }
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub direction: Direction,
    /// relaxed solution per served pair, variable order of `SdrProblem::variables`
    pub gamma_relaxed: Vec<CMat>,
    pub weights: Weights,
    pub mu_star: f64,
    pub mu_upper: f64,
    /// `(μ, feasible)` in evaluation order
    pub trace: Vec<(f64, bool)>,
    pub mask: ServiceMask,
    /// no positive target was feasible; baseline weights returned
    pub fallback: bool,
    /// APs whose extracted weights had to be scaled back into the budget
    pub rescaled_aps: usize,
}

/// Top eigenpair `γ = √λ_max u_max`.
pub fn rank_one(gamma: &CMat) -> CVec {
    let e = eigh_dense(gamma);
    let last = e.values.len() - 1;
    let lambda = e.values[last].max(0.0);
    e.vectors.column(last) * c(lambda.sqrt())
}

pub fn maxmin_bisection(
    sdr: &SdrProblem,
    blocks: &BlockSet,
    baseline: &Weights,
    opts: &AllocationOptions,
) -> Result<AllocationResult, CoreError> {
    let vars = sdr.variables();
    let barrier = sdr.barrier_options(&opts.barrier);
    let upper = sdr.mu_upper_bound();
    let (mut lo, mut hi) = (0.0, upper);
    let mut best: Option<Vec<CMat>> = None;
    let mut trace = Vec::new();
    while hi > 0.0 && hi - lo >= opts.epsilon * hi {
        let mu = 0.5 * (lo + hi);
        let verdict = solve_feasibility(&sdr.feasibility(mu)?, &barrier);
        let ok = matches!(verdict, Feasibility::Feasible(_));
        trace.push((mu, ok));
        if let Feasibility::Feasible(g) = verdict {
            lo = mu;
            best = Some(g);
        } else {
            hi = mu;
        }
    }
    let kk = sdr.num_users;
    let Some(gamma_relaxed) = best else {
        return Ok(AllocationResult {
            direction: sdr.direction,
            gamma_relaxed: Vec::new(),
            weights: baseline.clone(),
            mu_star: 0.0,
            mu_upper: upper,
            trace,
            mask: sdr.mask.clone(),
            fallback: true,
            rescaled_aps: 0,
        });
    };
    let mut gamma = vec![CVec::zeros(sdr.paths); sdr.num_aps * kk];
    for (v, &(m, k)) in vars.iter().enumerate() {
        gamma[m * kk + k] = rank_one(&gamma_relaxed[v]);
    }
    let mut weights = Weights { num_users: kk, gamma };
    let rescaled_aps = enforce_budget(&mut weights, blocks, &sdr.mask);
    Ok(AllocationResult {
        direction: sdr.direction,
        gamma_relaxed,
        weights,
        mu_star: lo,
        mu_upper: upper,
        trace,
        mask: sdr.mask.clone(),
        fallback: false,
        rescaled_aps,
    })
}

/// `Σ_k ‖Ĝ_mk γ_mk‖²/‖Ĝ_mk‖_F²` for AP `m`.
pub fn budget_use(weights: &Weights, blocks: &BlockSet, m: usize) -> f64 {
    (0..blocks.num_users)
        .map(|k| {
            let b = blocks.block(m, k);
            let f = b.norm_squared();
            if f > 0.0 {
                (b * weights.get(m, k)).norm_squared() / f
            } else {
                0.0
            }
        })
        .sum()
}

/// Scales an AP's weights down when it exceeds its budget; zeroes unserved
/// pairs. Returns the number of rescaled APs.
pub fn enforce_budget(weights: &mut Weights, blocks: &BlockSet, mask: &ServiceMask) -> usize {
    let kk = blocks.num_users;
    let mut rescaled = 0;
    for m in 0..blocks.num_aps {
        for k in 0..kk {
            if !mask.get(m, k) {
                weights.gamma[m * kk + k].fill(c(0.0));
            }
        }
        let used = budget_use(weights, blocks, m);
        if used > 1.0 {
            let s = c(1.0 / used.sqrt());
            for k in 0..kk {
                weights.gamma[m * kk + k] *= s;
            }
            rescaled += 1;
        }
    }
    rescaled
}

/// Per-(m,k) water-filling powers over the served set of each AP, with
/// `ρ_tot = |𝒦_m| ρ_d` and gains `‖Â_mk B̂_mk‖_F²`.
pub fn waterfill_dl(est: &MultipathEstimate, config: &SystemConfig, mask: &ServiceMask) -> Vec<f64> {
    let (mm, kk) = (est.num_aps, est.num_users);
    let mut rho = vec![0.0; mm * kk];
    for m in 0..mm {
        let served: Vec<usize> = (0..kk).filter(|&k| mask.get(m, k)).collect();
        if served.is_empty() {
            continue;
        }
        let total = served.len() as f64 * config.dl_power;
        let inv = |k: usize| {
            let g = est.link(m, k).channel_power();
            if g > 0.0 {
                config.noise_var / g
            } else {
                f64::INFINITY
            }
        };
        let mut active: Vec<usize> = served.iter().copied().filter(|&k| inv(k).is_finite()).collect();
        loop {
            if active.is_empty() {
                break;
            }
            let level = (total + active.iter().map(|&k| inv(k)).sum::<f64>()) / active.len() as f64;
            let keep: Vec<usize> = active.iter().copied().filter(|&k| level - inv(k) > 0.0).collect();
            if keep.len() == active.len() {
                for &k in &active {
                    rho[m * kk + k] = level - inv(k);
                }
                break;
            }
            active = keep;
        }
    }
    rho
}

/// Downlink weights whose per-AP shares follow the water-filling powers.
pub fn waterfill_weights(est: &MultipathEstimate, blocks: &BlockSet, config: &SystemConfig, mask: &ServiceMask) -> Weights {
    let kk = est.num_users;
    let rho = waterfill_dl(est, config, mask);
    let shares: Vec<f64> = rho
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let served = mask.served_by(i / kk);
            if served == 0 {
                0.0
            } else {
                r / (served as f64 * config.dl_power)
            }
        })
        .collect();
    downlink_weights_from_shares(blocks, &shares, config.num_paths)
}

/// Per user, the smallest set of strongest APs holding `δ%` of its total
/// estimated channel power.
pub fn select_aps_uc(est: &MultipathEstimate, threshold_percent: f64) -> ServiceMask {
    let (mm, kk) = (est.num_aps, est.num_users);
    let mut mask = ServiceMask { num_aps: mm, num_users: kk, served: vec![false; mm * kk] };
    for k in 0..kk {
        let mut order: Vec<(usize, f64)> = (0..mm).map(|m| (m, est.link(m, k).channel_power())).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = order.iter().map(|p| p.1).sum();
        let target = threshold_percent / 100.0 * total;
        let mut acc = 0.0;
        for (m, p) in order {
            mask.set(m, k, true);
            acc += p;
            if acc >= target {
                break;
            }
        }
    }
    mask
}

/// Baseline weights: equal power on the downlink, `1/L` on the uplink.
pub fn baseline_weights(blocks: &BlockSet, mask: &ServiceMask, l: usize) -> Weights {
    match blocks.direction {
        Direction::Downlink => equal_power_weights(blocks, mask, l),
        Direction::Uplink => uplink_default_weights(blocks, mask, l),
    }
}

/// Full max-min pipeline for one instance and direction.
pub fn maxmin_allocate(
    est: &MultipathEstimate,
    blocks: &BlockSet,
    unc: &Uncertainty,
    mask: &ServiceMask,
    config: &SystemConfig,
    opts: &AllocationOptions,
) -> Result<AllocationResult, CoreError> {
    let base = baseline_weights(blocks, mask, config.num_paths);
    let base_bf = assemble(blocks, &base);
    let sdr = build_sdr(est, blocks, unc, &base_bf, mask, config, opts.uncertainty);
    maxmin_bisection(&sdr, blocks, &base, opts)
}
