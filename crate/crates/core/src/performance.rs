//! Closed-form and genie-aided spectral efficiency, and energy efficiency.

use rand::Rng;

use crate::beamforming::{BeamformerSet, Direction, ServiceMask, Uncertainty};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::estimation::MultipathEstimate;
use crate::linalg::{index_weighted, CMat, CVec, C64};
use crate::rng::{complex_normal, Purpose, TrialStreams};

/// Per-(m,k,j) terms of the closed forms, index `(m·K + k)·K + j`.
///
/// `gain = ‖B̂_mk^H Â_mk^H u_mj‖²` and `uncertainty` is the matching Ω (or Λ)
/// contribution, with `u` the assembled precoder or combiner.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub num_aps: usize,
    pub num_users: usize,
    pub gain: Vec<f64>,
    pub uncertainty: Vec<f64>,
}

impl Coupling {
    fn idx(&self, m: usize, k: usize, j: usize) -> usize {
        (m * self.num_users + k) * self.num_users + j
    }

    pub fn gain(&self, m: usize, k: usize, j: usize) -> f64 {
        self.gain[self.idx(m, k, j)]
    }

    pub fn uncertainty(&self, m: usize, k: usize, j: usize) -> f64 {
        self.uncertainty[self.idx(m, k, j)]
    }
}

pub fn coupling(est: &MultipathEstimate, bf: &BeamformerSet, unc: &Uncertainty) -> Coupling {
    let (mm, kk, n) = (est.num_aps, est.num_users, est.antennas);
    let mut gain = vec![0.0; mm * kk * kk];
    let mut uncertainty = vec![0.0; mm * kk * kk];
    for m in 0..mm {
        let w = CMat::from_columns(&(0..kk).map(|j| bf.vector(m, j).clone()).collect::<Vec<_>>());
        let ew = index_weighted(&w);
        for k in 0..kk {
            let link = est.link(m, k);
            let ah = link.steering(n).adjoint();
            let a_w = &ah * &w; // L×K
            let a_ew = &ah * &ew;
            let (su, sb) = unc.get(m, k);
            for j in 0..kk {
                let (mut g, mut ge, mut p, mut pe) = (0.0, 0.0, 0.0, 0.0);
                for (l, beta) in link.beta.iter().enumerate() {
                    let b = beta.max(0.0);
                    let x = a_w[(l, j)].norm_sqr();
                    let y = a_ew[(l, j)].norm_sqr();
                    g += b * x;
                    ge += b * y;
                    p += x;
                    pe += y;
                }
                let i = (m * kk + k) * kk + j;
                gain[i] = g;
                uncertainty[i] = su * ge + sb * p + sb * su * pe;
            }
        }
    }
    Coupling { num_aps: mm, num_users: kk, gain, uncertainty }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub direction: Direction,
    pub sinr: Vec<f64>,
    pub rate: Vec<f64>,
    /// κ = 1 − τ/τ_c
    pub prelog: f64,
}

impl RateReport {
    pub fn from_sinr(direction: Direction, sinr: Vec<f64>, prelog: f64) -> Self {
        let rate = sinr.iter().map(|s| (1.0 + s.max(0.0)).log2()).collect();
        Self { direction, sinr, rate, prelog }
    }

    pub fn sum_rate(&self) -> f64 {
        self.rate.iter().sum()
    }

    pub fn min_rate(&self) -> f64 {
        self.rate.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `κ Σ_k R_k`, bit/s/Hz
    pub fn throughput(&self) -> f64 {
        self.prelog * self.sum_rate()
    }
}

/// Signal, interference, uncertainty and noise of the closed form for user k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    pub signal: f64,
    pub interference: f64,
    pub uncertainty: f64,
    pub noise: f64,
}

impl SinrTerms {
    pub fn sinr(&self, power: f64) -> f64 {
        power * self.signal / (power * (self.interference + self.uncertainty) + self.noise)
    }
}

/// Closed-form terms; the noise is `σ²` on the downlink and `σ² Σ_m ‖v_mk‖²`
/// on the uplink.
pub fn closed_form_terms(cp: &Coupling, bf: &BeamformerSet, noise_var: f64) -> Vec<SinrTerms> {
    let (mm, kk) = (cp.num_aps, cp.num_users);
    (0..kk)
        .map(|k| {
            let mut t = SinrTerms { signal: 0.0, interference: 0.0, uncertainty: 0.0, noise: 0.0 };
            for m in 0..mm {
                for j in 0..kk {
                    if j == k {
                        t.signal += cp.gain(m, k, j);
                    } else {
                        t.interference += cp.gain(m, k, j);
                    }
                    t.uncertainty += cp.uncertainty(m, k, j);
                }
            }
            t.noise = match bf.direction {
                Direction::Downlink => noise_var,
                Direction::Uplink => noise_var * (0..mm).map(|m| bf.vector(m, k).norm_squared()).sum::<f64>(),
            };
            t
        })
        .collect()
}

fn closed(est: &MultipathEstimate, bf: &BeamformerSet, unc: &Uncertainty, config: &SystemConfig, power: f64) -> RateReport {
    let cp = coupling(est, bf, unc);
    let sinr = closed_form_terms(&cp, bf, config.noise_var).iter().map(|t| t.sinr(power)).collect();
    RateReport::from_sinr(bf.direction, sinr, config.prelog())
}

pub fn sinr_dl_closed(est: &MultipathEstimate, bf: &BeamformerSet, unc: &Uncertainty, config: &SystemConfig) -> RateReport {
    assert_eq!(bf.direction, Direction::Downlink);
    closed(est, bf, unc, config, config.dl_power)
}

pub fn sinr_ul_closed(est: &MultipathEstimate, bf: &BeamformerSet, unc: &Uncertainty, config: &SystemConfig) -> RateReport {
    assert_eq!(bf.direction, Direction::Uplink);
    closed(est, bf, unc, config, config.ul_power)
}

/// Monte-Carlo rate per user with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct GenieReport {
    pub direction: Direction,
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

impl GenieReport {
    pub fn sum_rate(&self) -> f64 {
        self.rate.iter().sum()
    }
}

/// Genie-aided rate over fresh small-scale fading `α ~ CN(0, I_L)`.
///
/// Default (incoherent) form: `ρ Σ_m |h_mk^H u_mk|² / (ρ Σ_{j≠k} Σ_m |h_mk^H u_mj|² + noise)`.
/// With `coherent`, the sums over `m` are taken inside the magnitude.
pub fn rate_genie(
    truth: &ChannelRealization,
    bf: &BeamformerSet,
    config: &SystemConfig,
    trials: usize,
    coherent: bool,
    streams: &TrialStreams,
) -> GenieReport {
    assert!(trials >= 1, "need at least one trial");
    let (mm, kk, n) = (truth.num_aps, truth.num_users, truth.antennas);
    let power = match bf.direction {
        Direction::Downlink => config.dl_power,
        Direction::Uplink => config.ul_power,
    };
    let noise: Vec<f64> = (0..kk)
        .map(|k| match bf.direction {
            Direction::Downlink => config.noise_var,
            Direction::Uplink => config.noise_var * (0..mm).map(|m| bf.vector(m, k).norm_squared()).sum::<f64>(),
        })
        .collect();
    // (A B)^H u_mj per (m,k): L×K
    let proj: Vec<CMat> = (0..mm * kk)
        .map(|i| {
            let (m, k) = (i / kk, i % kk);
            let u = CMat::from_columns(&(0..kk).map(|j| bf.vector(m, j).clone()).collect::<Vec<_>>());
            truth.link(m, k).steering_gain(n).adjoint() * u
        })
        .collect();
    let mut rng = streams.rng_sub(Purpose::Genie, bf.direction as u16);
    let mut sum = vec![0.0; kk];
    let mut sum_sq = vec![0.0; kk];
    let mut coherent_acc = vec![C64::new(0.0, 0.0); kk];
    let mut incoherent_acc = vec![0.0; kk];
    for _ in 0..trials {
        for k in 0..kk {
            coherent_acc.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            incoherent_acc.iter_mut().for_each(|z| *z = 0.0);
            for m in 0..mm {
                let p = &proj[m * kk + k];
                let l = p.nrows();
                let alpha: CVec = CVec::from_fn(l, |_, _| complex_normal(&mut rng, 1.0) / (l as f64).sqrt());
                for j in 0..kk {
                    // h^H u = α^H (AB)^H u
                    let v = alpha.dotc(&p.column(j));
                    coherent_acc[j] += v;
                    incoherent_acc[j] += v.norm_sqr();
                }
            }
            let mag = |j: usize| if coherent { coherent_acc[j].norm_sqr() } else { incoherent_acc[j] };
            let signal = mag(k);
            let interference: f64 = (0..kk).filter(|&j| j != k).map(mag).sum();
            let r = (1.0 + power * signal / (power * interference + noise[k])).log2();
            sum[k] += r;
            sum_sq[k] += r * r;
        }
    }
    let t = trials as f64;
    let rate: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let stderr = sum_sq
        .iter()
        .zip(&rate)
        .map(|(s2, mean)| {
            if trials < 2 {
                return 0.0;
            }
            let var = ((s2 - t * mean * mean) / (t - 1.0)).max(0.0);
            (var / t).sqrt()
        })
        .collect();
    GenieReport { direction: bf.direction, rate, stderr, trials }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub active_aps: Vec<usize>,
    /// per active AP, W
    pub ap_power: Vec<f64>,
    /// per active AP, W
    pub backhaul_power: Vec<f64>,
    pub total_power: f64,
    /// bit/J
    pub ee: f64,
}

/// Power model: amplifier plus circuit power per AP and a fixed plus
/// traffic-proportional backhaul cost, summed over APs serving anyone.
pub fn energy_efficiency(rates: &RateReport, bf: &BeamformerSet, mask: &ServiceMask, config: &SystemConfig) -> EnergyReport {
    let n = config.antennas_per_ap as f64;
    let active = mask.active_aps();
    let traffic_cost = config.ee_backhaul_traffic * 1e-9; // W per bit/s
    let mut ap_power = Vec::with_capacity(active.len());
    let mut backhaul_power = Vec::with_capacity(active.len());
    for &m in &active {
        let amp = config.dl_power * config.noise_var * n * bf.ap_power(m) / config.ee_amp_efficiency;
        ap_power.push(amp + n * config.ee_circuit_power);
        let traffic: f64 = (0..mask.num_users).filter(|&k| mask.get(m, k)).map(|k| rates.prelog * rates.rate[k]).sum();
        backhaul_power.push(config.ee_backhaul_fixed + config.bandwidth * traffic * traffic_cost);
    }
    let total_power = ap_power.iter().sum::<f64>() + backhaul_power.iter().sum::<f64>();
    let ee = if total_power > 0.0 { config.bandwidth * rates.throughput() / total_power } else { 0.0 };
    EnergyReport { active_aps: active, ap_power, backhaul_power, total_power, ee }
}

/// Draws one `CN(0, I_L)` vector; exposed for oracle tests.
pub fn draw_alpha<R: Rng>(rng: &mut R, l: usize) -> CVec {
    CVec::from_fn(l, |_, _| complex_normal(rng, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{assemble, build_blocks, equal_power_weights, Scheme, Weights};
    use crate::estimation::LinkEstimate;
    use crate::linalg::c;
    use std::f64::consts::PI;

    fn link(upsilon: Vec<f64>, beta: Vec<f64>) -> LinkEstimate {
        let l = beta.len();
        LinkEstimate {
            phi: upsilon.iter().map(|u| (u / PI).clamp(-1.0, 1.0).asin()).collect(),
            upsilon,
            beta,
            d_hat: CMat::zeros(l, 0),
            noise_var: 0.0,
            peaks: vec![],
            rotations: vec![],
            degenerate: false,
            perturbed: false,
        }
    }

    fn two_user() -> MultipathEstimate {
        MultipathEstimate::from_links(
            2,
            2,
            8,
            PI,
            vec![
                link(vec![0.2, 1.1], vec![1.0, 4.0]),
                link(vec![-0.5, 2.1], vec![0.2, 0.1]),
                link(vec![0.9, -2.5], vec![3.0, 1.0]),
                link(vec![-1.4, 0.4], vec![0.6, 0.8]),
            ],
        )
    }

    #[test]
    fn single_user_zf_has_no_interference() {
        let est = MultipathEstimate::from_links(1, 1, 8, PI, vec![link(vec![0.4], vec![2.0])]);
        let cfg = SystemConfig { num_aps: 1, num_users: 1, num_paths: 1, pilot_len: 1, ..Default::default() };
        let unc = Uncertainty::zero(1, 1);
        let blocks = build_blocks(&est, Scheme::Azf, Direction::Downlink, &unc, cfg.noise_var);
        let bf = assemble(&blocks, &Weights::uniform(1, 1, 1, 1.0));
        let r = sinr_dl_closed(&est, &bf, &unc, &cfg);
        let a = crate::channel::steering_from_upsilon(0.4, 8);
        let s = 2.0 * a.dotc(bf.vector(0, 0)).norm_sqr();
        assert!((r.sinr[0] - cfg.dl_power * s / cfg.noise_var).abs() < 1e-9 * r.sinr[0]);
    }

    #[test]
    fn zf_cross_terms_vanish() {
        let est = two_user();
        let unc = Uncertainty::zero(2, 2);
        let blocks = build_blocks(&est, Scheme::Azf, Direction::Downlink, &unc, 0.1);
        let bf = assemble(&blocks, &equal_power_weights(&blocks, &ServiceMask::all(2, 2), 2));
        let cp = coupling(&est, &bf, &unc);
        for m in 0..2 {
            assert!(cp.gain(m, 0, 1) < 1e-20 && cp.gain(m, 1, 0) < 1e-20);
            assert!(cp.gain(m, 0, 0) > 0.0);
        }
    }

    #[test]
    fn more_noise_lowers_every_sinr() {
        let est = two_user();
        let cfg = SystemConfig { num_aps: 2, num_users: 2, num_paths: 2, pilot_len: 2, antennas_per_ap: 8, ..Default::default() };
        let unc = Uncertainty::zero(2, 2);
        let blocks = build_blocks(&est, Scheme::Amf, Direction::Downlink, &unc, cfg.noise_var);
        let bf = assemble(&blocks, &equal_power_weights(&blocks, &ServiceMask::all(2, 2), 2));
        let a = sinr_dl_closed(&est, &bf, &unc, &cfg);
        let noisy = SystemConfig { noise_var: 2.0 * cfg.noise_var, ..cfg.clone() };
        let b = sinr_dl_closed(&est, &bf, &unc, &noisy);
        for k in 0..2 {
            assert!(b.sinr[k] < a.sinr[k]);
        }
    }

    #[test]
    fn uplink_sinr_is_scale_invariant() {
        let est = two_user();
        let cfg = SystemConfig { num_aps: 2, num_users: 2, num_paths: 2, pilot_len: 2, antennas_per_ap: 8, ..Default::default() };
        let unc = Uncertainty { num_users: 2, values: vec![(1e-3, 1e-2); 4] };
        let blocks = build_blocks(&est, Scheme::Ammse, Direction::Uplink, &unc, cfg.noise_var);
        let bf = assemble(&blocks, &Weights::uniform(2, 2, 2, 0.5));
        let a = sinr_ul_closed(&est, &bf, &unc, &cfg);
        let b = sinr_ul_closed(&est, &bf.scaled(7.5), &unc, &cfg);
        for k in 0..2 {
            assert!((a.sinr[k] - b.sinr[k]).abs() < 1e-12 * a.sinr[k]);
        }
    }

    #[test]
    fn energy_floor_and_zero_rates() {
        let est = two_user();
        let cfg = SystemConfig { num_aps: 2, num_users: 2, num_paths: 2, pilot_len: 2, antennas_per_ap: 8, ..Default::default() };
        let unc = Uncertainty::zero(2, 2);
        let blocks = build_blocks(&est, Scheme::Amf, Direction::Downlink, &unc, cfg.noise_var);
        let mask = ServiceMask::all(2, 2);
        let bf = assemble(&blocks, &equal_power_weights(&blocks, &mask, 2));
        let zero = RateReport::from_sinr(Direction::Downlink, vec![0.0, 0.0], cfg.prelog());
        let e = energy_efficiency(&zero, &bf, &mask, &cfg);
        assert_eq!(e.ee, 0.0);
        let floor = 2.0 * (8.0 * cfg.ee_circuit_power + cfg.ee_backhaul_fixed);
        let amp = 2.0 * cfg.dl_power * cfg.noise_var * 8.0 / cfg.ee_amp_efficiency;
        assert!((e.total_power - floor - amp).abs() < 1e-9);
    }

    #[test]
    fn genie_vanishes_with_huge_noise() {
        let est = two_user();
        let truth = ChannelRealization::from_links(
            2,
            2,
            8,
            PI,
            est.links()
                .iter()
                .map(|l| crate::channel::LinkChannel {
                    phi: l.phi.clone(),
                    upsilon: l.upsilon.clone(),
                    beta: l.beta.clone(),
                    alpha: CMat::from_element(2, 1, c(1.0)),
                })
                .collect(),
        );
        let cfg = SystemConfig { num_aps: 2, num_users: 2, num_paths: 2, pilot_len: 2, antennas_per_ap: 8, noise_var: 1e12, ..Default::default() };
        let unc = Uncertainty::zero(2, 2);
        let blocks = build_blocks(&est, Scheme::Amf, Direction::Downlink, &unc, cfg.noise_var);
        let bf = assemble(&blocks, &equal_power_weights(&blocks, &ServiceMask::all(2, 2), 2));
        let g = rate_genie(&truth, &bf, &cfg, 200, false, &TrialStreams::new(3, 0));
        assert!(g.sum_rate() < 1e-9);
        let again = rate_genie(&truth, &bf, &cfg, 200, false, &TrialStreams::new(3, 0));
        assert_eq!(g, again);
    }
}
