//! Geometric multipath channel: `h_mk(t) = √(1/L) · A_mk B_mk α_mk(t)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::config::SystemConfig;
use crate::layout::Layout;
use crate::linalg::{c, CMat, CVec, C64};
use crate::rng::{complex_normal, normal, Purpose, TrialStreams};
use crate::CoreError;

/// Breakpoint distance of the two-slope path-loss model, km.
pub const BREAKPOINT_KM: f64 = 0.05;
pub const LOS_CONSTANT_DB: f64 = -148.0;
pub const NLOS_CONSTANT_DB: f64 = -158.0;
/// Floor applied to perturbed large-scale gains.
pub const BETA_FLOOR: f64 = 1e-12;

/// `a_q = e^{j q υ}/√N`, `q = 0..N−1`.
pub fn steering_from_upsilon(upsilon: f64, n: usize) -> CVec {
    let s = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |q, _| C64::from_polar(s, q as f64 * upsilon))
}

pub fn steering_vector(phi: f64, n: usize, eta: f64) -> CVec {
    steering_from_upsilon(eta * phi.sin(), n)
}

/// Columns `a(υ_l)`.
pub fn steering_matrix(upsilons: &[f64], n: usize) -> CMat {
    let mut a = CMat::zeros(n, upsilons.len());
    for (l, &u) in upsilons.iter().enumerate() {
        a.set_column(l, &steering_from_upsilon(u, n));
    }
    a
}

/// Two-slope path loss with shadowing, in dB.
pub fn path_loss_db(distance_km: f64, shadow_db: f64, los: bool) -> Result<f64, CoreError> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(CoreError::Domain(format!("path loss needs a positive distance, got {distance_km}")));
    }
    let p = if los { LOS_CONSTANT_DB } else { NLOS_CONSTANT_DB };
    Ok(if distance_km > BREAKPOINT_KM {
        p - 37.6 * distance_km.log10() + shadow_db - 15.0 * BREAKPOINT_KM.log10()
    } else {
        p - 35.0 * distance_km.log10() + shadow_db
    })
}

pub fn is_los(distance_km: f64) -> bool {
    distance_km <= BREAKPOINT_KM
}

/// Path loss at `D/2` without shadowing; all simulator gains are relative to it.
pub fn reference_path_loss_db(config: &SystemConfig) -> f64 {
    let d = config.square_side / 2.0;
    path_loss_db(d, 0.0, is_los(d)).expect("positive side length")
}

/// Ground truth for one (AP, user) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    /// radians in [0, 2π)
    pub phi: Vec<f64>,
    /// η·sin φ
    pub upsilon: Vec<f64>,
    /// linear, relative to the reference gain
    pub beta: Vec<f64>,
    /// L×T small-scale gains
    pub alpha: CMat,
}

impl LinkChannel {
    pub fn num_paths(&self) -> usize {
        self.beta.len()
    }

    pub fn steering(&self, n: usize) -> CMat {
        steering_matrix(&self.upsilon, n)
    }

    pub fn gain_diag(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(self.beta.len(), self.beta.iter().map(|b| c(b.sqrt()))))
    }

    /// `A B` (N×L)
    pub fn steering_gain(&self, n: usize) -> CMat {
        let mut a = self.steering(n);
        for (l, b) in self.beta.iter().enumerate() {
            a.column_mut(l).scale_mut(b.sqrt());
        }
        a
    }

    /// N×T matrix of `h(t)`.
    pub fn channel_matrix(&self, n: usize) -> CMat {
        let l = self.num_paths() as f64;
        self.steering_gain(n) * &self.alpha * c(1.0 / l.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub num_aps: usize,
    pub num_users: usize,
    pub antennas: usize,
    pub eta: f64,
    links: Vec<LinkChannel>,
}

impl ChannelRealization {
    /// Links in AP-major order: index `m·K + k`.
    pub fn from_links(num_aps: usize, num_users: usize, antennas: usize, eta: f64, links: Vec<LinkChannel>) -> Self {
        assert_eq!(links.len(), num_aps * num_users, "one link per (AP, user)");
        Self { num_aps, num_users, antennas, eta, links }
    }

    pub fn link(&self, m: usize, k: usize) -> &LinkChannel {
        &self.links[m * self.num_users + k]
    }

    pub fn links(&self) -> &[LinkChannel] {
        &self.links
    }

    pub fn channel(&self, m: usize, k: usize, t: usize) -> CVec {
        self.link(m, k).channel_matrix(self.antennas).column(t).into_owned()
    }

    /// One CSV per tensor: angles, large-scale gains, small-scale gains.
    pub fn write_csv_bundle(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut angles = std::fs::File::create(dir.join("angles.csv"))?;
        let mut gains = std::fs::File::create(dir.join("large_scale.csv"))?;
        let mut fading = std::fs::File::create(dir.join("small_scale.csv"))?;
        writeln!(angles, "m,k,l,phi,upsilon")?;
        writeln!(gains, "m,k,l,beta")?;
        writeln!(fading, "m,k,l,t,re,im")?;
        for m in 0..self.num_aps {
            for k in 0..self.num_users {
                let link = self.link(m, k);
                for l in 0..link.num_paths() {
                    writeln!(angles, "{m},{k},{l},{},{}", link.phi[l], link.upsilon[l])?;
                    writeln!(gains, "{m},{k},{l},{}", link.beta[l])?;
                }
                // column-major over (l, t)
                for t in 0..link.alpha.ncols() {
                    for l in 0..link.num_paths() {
                        let a = link.alpha[(l, t)];
                        writeln!(fading, "{m},{k},{l},{t},{},{}", a.re, a.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn draw_small_scale<R: Rng>(rng: &mut R, l: usize, t: usize) -> CMat {
    // column-major fill keeps draw order independent of L when T changes
    let mut a = CMat::zeros(l, t);
    for col in 0..t {
        for row in 0..l {
            a[(row, col)] = complex_normal(rng, 1.0);
        }
    }
    a
}

pub fn draw_channel(config: &SystemConfig, layout: &Layout, streams: &TrialStreams) -> ChannelRealization {
    let mut angle_rng = streams.rng(Purpose::Angles);
    let mut shadow_rng = streams.rng(Purpose::Shadowing);
    let mut fading_rng = streams.rng(Purpose::SmallScale);
    let eta = config.eta();
    let l = config.num_paths;
    let ref_db = reference_path_loss_db(config);
    let mut links = Vec::with_capacity(config.num_aps * config.num_users);
    for m in 0..config.num_aps {
        for k in 0..config.num_users {
            let d = layout.distance(m, k).max(1e-6);
            let los = is_los(d);
            let phi: Vec<f64> = (0..l).map(|_| angle_rng.gen_range(0.0..2.0 * PI)).collect();
            let upsilon = phi.iter().map(|p| eta * p.sin()).collect();
            let beta = (0..l)
                .map(|_| {
                    let z = normal(&mut shadow_rng, config.shadow_std_db);
                    let pl = path_loss_db(d, z, los).expect("positive distance");
                    10f64.powf((pl - ref_db) / 10.0)
                })
                .collect();
            let alpha = draw_small_scale(&mut fading_rng, l, config.snapshots);
            links.push(LinkChannel { phi, upsilon, beta, alpha });
        }
    }
    ChannelRealization::from_links(config.num_aps, config.num_users, config.antennas_per_ap, eta, links)
}

/// Solve `η sin φ' = υ'` on the same branch of sine as `phi`.
fn angle_on_branch(phi: f64, upsilon: f64, eta: f64) -> f64 {
    let base = (upsilon / eta).clamp(-1.0, 1.0).asin();
    let out = if phi.cos() >= 0.0 { base } else { PI - base };
    out.rem_euclid(2.0 * PI)
}

/// Downlink counterpart: perturbed angles and gains, fresh small-scale fading.
pub fn apply_reciprocity(uplink: &ChannelRealization, config: &SystemConfig, streams: &TrialStreams) -> ChannelRealization {
    let mut err_rng = streams.rng(Purpose::Reciprocity);
    let mut fading_rng = streams.rng(Purpose::DownlinkSmallScale);
    let su = config.reciprocity_var_upsilon.sqrt();
    let sb = config.reciprocity_var_beta.sqrt();
    let links = uplink
        .links
        .iter()
        .map(|link| {
            let l = link.num_paths();
            let mut phi = link.phi.clone();
            let mut upsilon = link.upsilon.clone();
            let mut beta = link.beta.clone();
            for i in 0..l {
                let du = normal(&mut err_rng, su);
                let db = normal(&mut err_rng, sb);
                if du != 0.0 {
                    upsilon[i] += du;
                    phi[i] = angle_on_branch(phi[i], upsilon[i], uplink.eta);
                }
                if db != 0.0 {
                    beta[i] = (beta[i] + db).max(BETA_FLOOR);
                }
            }
            let alpha = draw_small_scale(&mut fading_rng, l, link.alpha.ncols());
            LinkChannel { phi, upsilon, beta, alpha }
        })
        .collect();
    ChannelRealization { links, ..uplink.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadside_steering() {
        let a = steering_vector(0.0, 4, PI);
        for z in a.iter() {
            assert!((z - c(0.5)).norm() < 1e-15);
        }
    }

    #[test]
    fn path_loss_reference_value() {
        let v = path_loss_db(1.0, 0.0, true).unwrap();
        assert!((v - (-148.0 - 15.0 * 0.05f64.log10())).abs() < 1e-12);
        assert!((v + 128.47).abs() < 0.02);
    }

    #[test]
    fn path_loss_breakpoint_uses_near_branch() {
        let v = path_loss_db(BREAKPOINT_KM, 0.0, true).unwrap();
        assert!((v - (-148.0 - 35.0 * BREAKPOINT_KM.log10())).abs() < 1e-12);
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(path_loss_db(0.0, 0.0, false).is_err());
        assert!(path_loss_db(-1.0, 0.0, false).is_err());
    }

    #[test]
    fn single_unit_path_is_steering_vector() {
        let link = LinkChannel {
            phi: vec![0.4],
            upsilon: vec![PI * 0.4f64.sin()],
            beta: vec![1.0],
            alpha: CMat::from_element(1, 1, c(1.0)),
        };
        let h = link.channel_matrix(2);
        let a = steering_vector(0.4, 2, PI);
        assert!((h.column(0) - a).norm() < 1e-15);
    }

    #[test]
    fn branch_preserving_inverse() {
        for &phi in &[0.3, 2.0, 3.5, 5.9] {
            let u = PI * f64::sin(phi);
            assert!((angle_on_branch(phi, u, PI) - phi).abs() < 1e-12);
        }
    }
}
