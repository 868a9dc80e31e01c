//! Multipath component estimation from pilot-matched observations.
//!
//! Per snapshot: unitary DFT of the observation, greedy peak picking, then a
//! grid search over a phase ramp `Φ(Δφ) = diag(e^{jnΔφ})` that slides the
//! off-grid spatial frequency onto the picked bin:
//!
//!   υ̂ = 2πq/N − Δφ̂,   Δφ̂ = argmax_{Δφ ∈ 𝒢} |[F Φ(Δφ) y]_q|²
//!
//! Snapshot angles are associated to the first snapshot's ordering and
//! averaged. Path gains follow from least squares,
//! `D̂ = ρ^{-1/2} Â⁺ Ȳ`, and `β̂ = diag((L/T) D̂ D̂^H)`.

use std::f64::consts::PI;

use crate::channel::{steering_from_upsilon, steering_matrix, ChannelRealization, BETA_FLOOR};
use crate::config::{AngleAveraging, SystemConfig};
use crate::linalg::{c, hpd_solve, index_weighted, wrap_pi, CMat, CVec, C64};
use crate::rng::{complex_normal, Purpose, TrialStreams};
use crate::training::PilotObservation;

/// A peak counts as separable when it is a strict local maximum holding at
/// least this fraction of the spectrum maximum (sidelobes of a lone path sit
/// near −13 dB, below it).
pub const SEPARABLE_FRACTION: f64 = 0.1;
/// Shift applied to an estimated angle that coincides with another one.
pub const DUPLICATE_NUDGE: f64 = 1e-6;

/// `|F_N y|²` with `[F_N]_{nq} = e^{−j2πnq/N}/√N`.
pub fn dft_spectrum(y: &CVec) -> Vec<f64> {
    let n = y.len();
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|q| {
            let step = C64::from_polar(1.0, -2.0 * PI * q as f64 / n as f64);
            let mut w = c(1.0);
            let mut acc = c(0.0);
            for (i, yi) in y.iter().enumerate() {
                if i > 0 {
                    // re-anchor the phasor periodically to bound drift
                    w = if i % 16 == 0 { C64::from_polar(1.0, -2.0 * PI * ((q * i) % n) as f64 / n as f64) } else { w * step };
                }
                acc += yi * w;
            }
            (acc * s).norm_sqr()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakPick {
    pub indices: Vec<usize>,
    pub degenerate: bool,
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn is_separable(spectrum: &[f64], q: usize, max: f64) -> bool {
    let n = spectrum.len();
    let v = spectrum[q];
    if !(v >= SEPARABLE_FRACTION * max) || v <= 0.0 {
        return false;
    }
    if n < 3 {
        return true;
    }
    v > spectrum[(q + n - 1) % n] && v > spectrum[(q + 1) % n]
}

/// Greedy picking by descending magnitude with a circular exclusion window
/// of `⌈N/(2L)⌉` bins around accepted peaks.
pub fn pick_peaks(spectrum: &[f64], l: usize) -> PeakPick {
    let n = spectrum.len();
    assert!(l >= 1 && l <= n, "need 1 ≤ L ≤ N");
    let window = n.div_ceil(2 * l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]).then(a.cmp(&b)));
    let max = spectrum[order[0]];
    let mut accepted: Vec<usize> = Vec::with_capacity(l);
    for &q in &order {
        if accepted.len() == l {
            break;
        }
        if accepted.iter().all(|&a| circular_distance(a, q, n) >= window) {
            accepted.push(q);
        }
    }
    // window too wide to fit L peaks: fill with the best unused bins
    for &q in &order {
        if accepted.len() == l {
            break;
        }
        if !accepted.contains(&q) {
            accepted.push(q);
        }
    }
    let separable = accepted.iter().filter(|&&q| is_separable(spectrum, q, max)).count();
    PeakPick { indices: accepted, degenerate: separable < l }
}

/// Grid point `g` of the rotation search on `[−π/N, π/N]`.
pub fn rotation_grid_point(g: usize, grid: usize, n: usize) -> f64 {
    let half = PI / n as f64;
    if 2 * g + 1 == grid {
        return 0.0;
    }
    -half + 2.0 * half * g as f64 / (grid - 1) as f64
}

/// Returns `(Δφ̂, υ̂)` with `υ̂` wrapped to `[−π, π)`.
pub fn rotate_refine(y: &CVec, q: usize, grid: usize) -> (f64, f64) {
    assert!(grid >= 2, "rotation grid needs at least two points");
    let n = y.len();
    // z_i = y_i e^{−j2πqi/N}/√N, then the objective is |Σ z_i e^{jiΔ}|²
    let s = 1.0 / (n as f64).sqrt();
    let z: Vec<C64> = y
        .iter()
        .enumerate()
        .map(|(i, yi)| yi * C64::from_polar(s, -2.0 * PI * ((q * i) % n) as f64 / n as f64))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for g in 0..grid {
        let d = rotation_grid_point(g, grid, n);
        let step = C64::from_polar(1.0, d);
        let mut w = c(1.0);
        let mut acc = c(0.0);
        for zi in &z {
            acc += zi * w;
            w *= step;
        }
        let v = acc.norm_sqr();
        best = match best {
            // ties go to the smaller rotation
            Some((bv, bd)) => {
                let tol = 1e-12 * bv;
                if v > bv + tol || ((v - bv).abs() <= tol && d.abs() < bd.abs()) {
                    Some((v, d))
                } else {
                    Some((bv, bd))
                }
            }
            None => Some((v, d)),
        };
    }
    let dphi = best.expect("grid is nonempty").1;
    (dphi, wrap_pi(2.0 * PI * q as f64 / n as f64 - dphi))
}

/// `arcsin(clamp(υ/η))`
pub fn angle_from_upsilon(upsilon: f64, eta: f64) -> f64 {
    (upsilon / eta).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkEstimate {
    pub phi: Vec<f64>,
    /// η·sin φ̂, the spatial frequency used in Â.
    pub upsilon: Vec<f64>,
    pub beta: Vec<f64>,
    /// L×T (empty for exact estimates)
    pub d_hat: CMat,
    pub noise_var: f64,
    /// First-snapshot DFT bins and rotations.
    pub peaks: Vec<usize>,
    pub rotations: Vec<f64>,
    pub degenerate: bool,
    pub perturbed: bool,
}

impl LinkEstimate {
    pub fn num_paths(&self) -> usize {
        self.beta.len()
    }

    pub fn steering(&self, n: usize) -> CMat {
        steering_matrix(&self.upsilon, n)
    }

    /// `Â B̂`
    pub fn steering_gain(&self, n: usize) -> CMat {
        let mut a = self.steering(n);
        for (l, b) in self.beta.iter().enumerate() {
            a.column_mut(l).scale_mut(b.max(0.0).sqrt());
        }
        a
    }

    pub fn strongest_path(&self) -> usize {
        let mut best = 0;
        for (l, b) in self.beta.iter().enumerate() {
            if *b > self.beta[best] {
                best = l;
            }
        }
        best
    }

    /// `‖Â B̂‖_F² = Σ β̂_l`
    pub fn channel_power(&self) -> f64 {
        self.beta.iter().map(|b| b.max(0.0)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipathEstimate {
    pub num_aps: usize,
    pub num_users: usize,
    pub antennas: usize,
    pub eta: f64,
    links: Vec<LinkEstimate>,
}

impl MultipathEstimate {
    pub fn from_links(num_aps: usize, num_users: usize, antennas: usize, eta: f64, links: Vec<LinkEstimate>) -> Self {
        assert_eq!(links.len(), num_aps * num_users);
        Self { num_aps, num_users, antennas, eta, links }
    }

    /// Ground truth as an estimate (angles and gains exact).
    pub fn exact(realization: &ChannelRealization) -> Self {
        let links = realization
            .links()
            .iter()
            .map(|l| LinkEstimate {
                phi: l.phi.clone(),
                upsilon: l.upsilon.clone(),
                beta: l.beta.clone(),
                d_hat: CMat::zeros(l.num_paths(), 0),
                noise_var: 0.0,
                peaks: Vec::new(),
                rotations: Vec::new(),
                degenerate: false,
                perturbed: false,
            })
            .collect();
        Self::from_links(realization.num_aps, realization.num_users, realization.antennas, realization.eta, links)
    }

    pub fn link(&self, m: usize, k: usize) -> &LinkEstimate {
        &self.links[m * self.num_users + k]
    }

    pub fn links(&self) -> &[LinkEstimate] {
        &self.links
    }
}

struct Snapshot {
    upsilon: Vec<f64>,
    peaks: Vec<usize>,
    rotations: Vec<f64>,
    degenerate: bool,
}

fn snapshot_estimate(y: &CVec, l: usize, grid: usize) -> Snapshot {
    let spec = dft_spectrum(y);
    let pick = pick_peaks(&spec, l);
    let mut upsilon = Vec::with_capacity(l);
    let mut rotations = Vec::with_capacity(l);
    for &q in &pick.indices {
        let (d, u) = rotate_refine(y, q, grid);
        rotations.push(d);
        upsilon.push(u);
    }
    Snapshot { upsilon, peaks: pick.indices, rotations, degenerate: pick.degenerate }
}

/// Reorders `current` to follow `reference` by nearest circular distance and
/// unwraps each value next to its reference.
fn associate(reference: &[f64], current: &[f64]) -> Vec<f64> {
    let mut used = vec![false; current.len()];
    reference
        .iter()
        .map(|&r| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (j, &u) in current.iter().enumerate() {
                let d = wrap_pi(u - r).abs();
                if !used[j] && d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            used[best] = true;
            r + wrap_pi(current[best] - r)
        })
        .collect()
}

fn separate_duplicates(upsilon: &mut [f64], eta: f64) -> bool {
    let mut nudged = false;
    for _ in 0..upsilon.len() * upsilon.len() + 1 {
        let mut clash = None;
        'outer: for i in 0..upsilon.len() {
            for j in (i + 1)..upsilon.len() {
                if wrap_pi(upsilon[i] - upsilon[j]).abs() < 1e-9 {
                    clash = Some(j);
                    break 'outer;
                }
            }
        }
        match clash {
            Some(j) => {
                let phi = angle_from_upsilon(upsilon[j], eta);
                // push away from endfire so the nudge is not undone by the clamp
                let moved = if phi + DUPLICATE_NUDGE <= PI / 2.0 { phi + DUPLICATE_NUDGE } else { phi - DUPLICATE_NUDGE };
                upsilon[j] = eta * moved.sin();
                nudged = true;
            }
            None => break,
        }
    }
    nudged
}

/// Estimator for one (AP, user) observation `Ȳ` (N×T).
pub fn estimate_link(ybar: &CMat, config: &SystemConfig) -> LinkEstimate {
    let n = ybar.nrows();
    let t_len = ybar.ncols();
    let l = config.num_paths;
    let eta = config.eta();
    let first = snapshot_estimate(&ybar.column(0).into_owned(), l, config.grid_size);
    let mut degenerate = first.degenerate;
    let mut tracks: Vec<Vec<f64>> = first.upsilon.iter().map(|&u| vec![u]).collect();
    for t in 1..t_len {
        let snap = snapshot_estimate(&ybar.column(t).into_owned(), l, config.grid_size);
        degenerate |= snap.degenerate;
        for (track, u) in tracks.iter_mut().zip(associate(&first.upsilon, &snap.upsilon)) {
            track.push(u);
        }
    }
    let mut upsilon: Vec<f64> = tracks
        .iter()
        .map(|track| {
            let phi = match config.angle_averaging {
                AngleAveraging::Phi => track.iter().map(|u| angle_from_upsilon(*u, eta)).sum::<f64>() / track.len() as f64,
                AngleAveraging::Upsilon => {
                    angle_from_upsilon(wrap_pi(track.iter().sum::<f64>() / track.len() as f64), eta)
                }
            };
            eta * phi.sin()
        })
        .collect();
    let mut perturbed = separate_duplicates(&mut upsilon, eta);

    let a_hat = steering_matrix(&upsilon, n);
    let gram = a_hat.adjoint() * &a_hat;
    let rhs = a_hat.adjoint() * ybar * c(1.0 / config.pilot_power.sqrt());
    let d_hat = match hpd_solve(&gram, &rhs) {
        Some(d) => d,
        None => {
            perturbed = true;
            let loaded = &gram + CMat::identity(l, l) * c(1e-12 * gram.trace().re.max(1.0));
            hpd_solve(&loaded, &rhs).expect("diagonally loaded Gram is positive definite")
        }
    };
    let r_hat = &d_hat * d_hat.adjoint() * c(l as f64 / t_len as f64);
    let beta = (0..l).map(|i| r_hat[(i, i)].re.max(0.0)).collect();
    let resid = ybar - &a_hat * &d_hat * c(config.pilot_power.sqrt());
    let noise_var = resid.norm_squared() / (n * t_len) as f64;
    LinkEstimate {
        phi: upsilon.iter().map(|u| angle_from_upsilon(*u, eta)).collect(),
        upsilon,
        beta,
        d_hat,
        noise_var,
        peaks: first.peaks,
        rotations: first.rotations,
        degenerate,
        perturbed,
    }
}

pub fn estimate_multipath(obs: &PilotObservation, config: &SystemConfig) -> MultipathEstimate {
    let mut links = Vec::with_capacity(obs.num_aps * obs.num_users);
    for m in 0..obs.num_aps {
        for k in 0..obs.num_users {
            links.push(estimate_link(obs.ybar(m, k), config));
        }
    }
    MultipathEstimate::from_links(obs.num_aps, obs.num_users, config.antennas_per_ap, config.eta(), links)
}

/// Closed-form single-path error variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseOracle {
    pub mse_upsilon: f64,
    pub mse_phi: f64,
    pub mse_beta: f64,
}

/// `a^H E P_a^⊥ E a` and `a^H E a` for the unit-norm steering vector.
pub fn curvature_terms(upsilon: f64, n: usize) -> (f64, C64) {
    let a = steering_from_upsilon(upsilon, n);
    let ea = index_weighted(&CMat::from_column_slice(n, 1, a.as_slice()));
    let ea = ea.column(0);
    let proj = a.dotc(&ea); // a^H E a
    let q = ea.norm_squared() - proj.norm_sqr();
    (q, proj)
}

pub fn theoretical_mse(phi: f64, beta: f64, config: &SystemConfig) -> MseOracle {
    mse_with(phi, beta, config.pilot_power, config.noise_var, config.antennas_per_ap, config.eta())
}

pub fn mse_with(phi: f64, beta: f64, rho: f64, noise_var: f64, n: usize, eta: f64) -> MseOracle {
    let upsilon = eta * phi.sin();
    let (q, p) = curvature_terms(upsilon, n);
    let mse_upsilon = noise_var / (2.0 * rho * beta * q);
    let ratio = upsilon / eta;
    let mse_phi = if ratio.abs() >= 1.0 {
        f64::INFINITY
    } else {
        mse_upsilon / (eta * eta * (1.0 - ratio * ratio))
    };
    let mse_beta = (noise_var * p.norm_sqr() / (2.0 * rho * q) + noise_var / rho).powi(2);
    MseOracle { mse_upsilon, mse_phi, mse_beta }
}

/// Oracle evaluated at the strongest estimated path of a link.
pub fn link_oracle(est: &LinkEstimate, config: &SystemConfig) -> MseOracle {
    let l = est.strongest_path();
    mse_with(
        est.phi[l],
        est.beta[l].max(BETA_FLOOR),
        config.pilot_power,
        config.noise_var,
        config.antennas_per_ap,
        config.eta(),
    )
}

/// One single-path trial evaluated at several noise levels.
///
/// Angle, fading and a unit-variance noise draw are shared by all levels.
/// Returns the true angle and `(|υ̂ − υ|², (β̂ − β)²)` per level.
pub fn single_path_errors(
    config: &SystemConfig,
    beta: f64,
    noise_vars: &[f64],
    streams: &TrialStreams,
) -> (f64, Vec<(f64, f64)>) {
    use rand::Rng;
    let cfg = SystemConfig { num_paths: 1, ..config.clone() };
    let (n, t_len) = (cfg.antennas_per_ap, cfg.snapshots);
    let phi = streams.rng(Purpose::Angles).gen_range(0.0..2.0 * PI);
    let upsilon = cfg.eta() * phi.sin();
    let a = steering_from_upsilon(upsilon, n);
    let mut fading = streams.rng(Purpose::SmallScale);
    let alpha: Vec<C64> = (0..t_len).map(|_| complex_normal(&mut fading, 1.0)).collect();
    let mut noise_rng = streams.rng(Purpose::PilotNoise);
    let noise = CMat::from_fn(n, t_len, |_, _| complex_normal(&mut noise_rng, 1.0));
    let signal = CMat::from_fn(n, t_len, |q, t| a[q] * alpha[t] * (cfg.pilot_power * beta).sqrt());
    let errors = noise_vars
        .iter()
        .map(|&s2| {
            let level = SystemConfig { noise_var: s2, ..cfg.clone() };
            let ybar = &signal + &noise * c(s2.sqrt());
            let est = estimate_link(&ybar, &level);
            (wrap_pi(est.upsilon[0] - upsilon).powi(2), (est.beta[0] - beta).powi(2))
        })
        .collect();
    (phi, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::steering_vector;

    #[test]
    fn on_grid_spectrum_is_unit_impulse() {
        let n = 8;
        let a = steering_from_upsilon(2.0 * PI * 3.0 / 8.0, n);
        let s = dft_spectrum(&a);
        for (q, v) in s.iter().enumerate() {
            let want = if q == 3 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14, "bin {q}: {v}");
        }
    }

    #[test]
    fn zero_input_zero_spectrum() {
        assert!(dft_spectrum(&CVec::zeros(5)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_peak_is_argmax() {
        let s = vec![0.1, 0.5, 3.0, 0.2];
        assert_eq!(pick_peaks(&s, 1).indices, vec![2]);
    }

    #[test]
    fn two_separated_peaks() {
        let mut s = vec![0.0; 16];
        s[2] = 1.0;
        s[9] = 1.0;
        let p = pick_peaks(&s, 2);
        assert_eq!(p.indices, vec![2, 9]);
        assert!(!p.degenerate);
    }

    #[test]
    fn tie_breaks_by_lower_index() {
        let s = vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(pick_peaks(&s, 1).indices, vec![0]);
    }

    #[test]
    fn on_grid_rotation_is_zero_with_odd_grid() {
        let n = 16;
        let u = 2.0 * PI * 5.0 / n as f64;
        let y = steering_from_upsilon(u, n);
        let (d, est) = rotate_refine(&y, 5, 101);
        assert_eq!(d, 0.0);
        assert!((est - u).abs() < 1e-14);
    }

    #[test]
    fn off_grid_angle_recovered_to_grid_resolution() {
        let (n, grid) = (32, 100);
        let step = 2.0 * PI / (n as f64 * (grid - 1) as f64);
        for u in [0.05, 0.09, 0.11, -1.3, 2.9, 3.1] {
            let y = steering_from_upsilon(u, n);
            let q = pick_peaks(&dft_spectrum(&y), 1).indices[0];
            let (_, est) = rotate_refine(&y, q, grid);
            assert!(wrap_pi(est - u).abs() <= step / 2.0 + 1e-12, "υ = {u}: got {est}");
        }
    }

    #[test]
    fn grid_endpoints_inclusive() {
        let n = 32;
        assert!((rotation_grid_point(0, 100, n) + PI / 32.0).abs() < 1e-15);
        assert!((rotation_grid_point(99, 100, n) - PI / 32.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_matches_hand_value() {
        let (q, p) = curvature_terms(0.0, 4);
        assert!((q - 1.25).abs() < 1e-14);
        assert!((p.re - 1.5).abs() < 1e-14 && p.im.abs() < 1e-14);
    }

    #[test]
    fn oracle_scaling() {
        let cfg = SystemConfig { antennas_per_ap: 4, ..Default::default() };
        let a = theoretical_mse(0.0, 1.0, &cfg);
        assert!((a.mse_upsilon - cfg.noise_var / (2.0 * cfg.pilot_power * 1.25)).abs() < 1e-15);
        let doubled = SystemConfig { pilot_power: 2.0 * cfg.pilot_power, ..cfg.clone() };
        let b = theoretical_mse(0.0, 1.0, &doubled);
        assert!((b.mse_upsilon * 2.0 - a.mse_upsilon).abs() < 1e-15);
        assert!(a.mse_beta >= (cfg.noise_var / cfg.pilot_power).powi(2));
    }

    #[test]
    fn endfire_phi_is_infinite() {
        let cfg = SystemConfig::default();
        assert!(theoretical_mse(PI / 2.0, 1.0, &cfg).mse_phi.is_infinite());
    }

    #[test]
    fn noiseless_single_path_pipeline() {
        let n = 32;
        let cfg = SystemConfig { num_paths: 1, snapshots: 4, grid_size: 101, noise_var: 1e-30, ..Default::default() };
        let u = 2.0 * PI * 7.0 / n as f64;
        let phi = (u / PI).asin();
        let a = steering_vector(phi, n, PI);
        let alpha = [c(1.0), C64::new(0.3, -0.8), C64::new(-1.2, 0.1), C64::new(0.0, 0.5)];
        let beta = 2.5;
        let mut y = CMat::zeros(n, 4);
        for t in 0..4 {
            y.set_column(t, &(&a * (alpha[t] * (cfg.pilot_power * beta).sqrt())));
        }
        let est = estimate_link(&y, &cfg);
        assert!((est.upsilon[0] - u).abs() < 1e-12);
        let mean_sq = alpha.iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
        assert!((est.beta[0] - beta * mean_sq).abs() < 1e-10);
        assert!(est.noise_var < 1e-20);
    }

    #[test]
    fn duplicates_are_separated() {
        let mut u = vec![0.4, 0.4, 1.0];
        assert!(separate_duplicates(&mut u, PI));
        assert!((u[0] - u[1]).abs() > 1e-9);
    }
}
