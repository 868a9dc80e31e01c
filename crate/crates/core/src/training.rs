//! Uplink pilot observations.
//!
//! The estimator consumes the pilot-matched matrix `Ȳ_mk = √ρ H_mk + N̄_mk`
//! (N×T), drawn directly because a unit-norm pilot leaves the noise white with
//! variance σ². The raw N×τ waveform is available for checking that path.

use rand::Rng;

use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::linalg::{c, CMat, CVec, C64};
use crate::rng::{complex_normal, Purpose, TrialStreams};
use crate::CoreError;

/// First `K` rows of the unitary τ×τ DFT matrix.
pub fn pilot_matrix(config: &SystemConfig) -> Result<CMat, CoreError> {
    let (k, tau) = (config.num_users, config.pilot_len);
    if tau < k {
        return Err(CoreError::Config(format!("pilot_len {tau} < num_users {k}")));
    }
    let s = 1.0 / (tau as f64).sqrt();
    Ok(CMat::from_fn(k, tau, |r, n| {
        C64::from_polar(s, -2.0 * std::f64::consts::PI * (r * n) as f64 / tau as f64)
    }))
}

#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub num_aps: usize,
    pub num_users: usize,
    /// N×T per (m,k), AP-major
    ybar: Vec<CMat>,
}

impl PilotObservation {
    pub fn from_matrices(num_aps: usize, num_users: usize, ybar: Vec<CMat>) -> Self {
        assert_eq!(ybar.len(), num_aps * num_users);
        Self { num_aps, num_users, ybar }
    }

    pub fn ybar(&self, m: usize, k: usize) -> &CMat {
        &self.ybar[m * self.num_users + k]
    }
}

fn noise_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let mut n = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            n[(i, j)] = complex_normal(rng, var);
        }
    }
    n
}

pub fn observe_pilots(realization: &ChannelRealization, config: &SystemConfig, streams: &TrialStreams) -> PilotObservation {
    let mut rng = streams.rng(Purpose::PilotNoise);
    let sqrt_rho = c(config.pilot_power.sqrt());
    let n = realization.antennas;
    let ybar = realization
        .links()
        .iter()
        .map(|link| {
            let h = link.channel_matrix(n);
            let noise = noise_matrix(&mut rng, n, h.ncols(), config.noise_var);
            h * sqrt_rho + noise
        })
        .collect();
    PilotObservation { num_aps: realization.num_aps, num_users: realization.num_users, ybar }
}

/// Raw received block at AP `m`, snapshot `t`: `Σ_k √ρ h_mk(t) p_k + N`.
pub fn raw_pilot_block<R: Rng>(
    realization: &ChannelRealization,
    pilots: &CMat,
    m: usize,
    t: usize,
    pilot_power: f64,
    noise_var: f64,
    rng: &mut R,
) -> CMat {
    let n = realization.antennas;
    let tau = pilots.ncols();
    let mut y = noise_matrix(rng, n, tau, noise_var);
    for k in 0..realization.num_users {
        let h = realization.channel(m, k, t) * c(pilot_power.sqrt());
        y += &h * pilots.row(k);
    }
    y
}

/// `Y p_k^H`
pub fn match_pilot(y: &CMat, pilots: &CMat, k: usize) -> CVec {
    y * pilots.row(k).adjoint()
}
