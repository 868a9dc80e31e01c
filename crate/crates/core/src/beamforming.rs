//! Angle-based precoders and combiners built from `(Â, B̂)` only.
//!
//! Downlink vectors are `w_mk = (Ĝ_mk/‖Ĝ_mk‖_F) γ_mk`; uplink vectors are
//! `v_mk = Ĉ_mk γ_mk` with the same block families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::estimation::{link_oracle, LinkEstimate, MultipathEstimate};
use crate::linalg::{c, hpd_solve, index_weighted, CMat, CVec};

/// Largest Gram condition number accepted without diagonal loading.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Diagonal loading, relative to the mean Gram eigenvalue.
pub const ZF_LOADING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "A-MF")]
    Amf,
    #[serde(rename = "A-ZF")]
    Azf,
    #[serde(rename = "A-MMSE")]
    Ammse,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Amf, Scheme::Azf, Scheme::Ammse];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Amf => "A-MF",
            Scheme::Azf => "A-ZF",
            Scheme::Ammse => "A-MMSE",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "amf" | "mf" => Ok(Scheme::Amf),
            "azf" | "zf" => Ok(Scheme::Azf),
            "ammse" | "mmse" => Ok(Scheme::Ammse),
            _ => Err(format!("unknown scheme `{s}` (expected A-MF, A-ZF or A-MMSE)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Downlink => "dl",
            Direction::Uplink => "ul",
        }
    }
}

/// Effective uncertainty variances `(σ̃_υ², σ̃_β²)` per (m,k), AP-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Uncertainty {
    pub num_users: usize,
    pub values: Vec<(f64, f64)>,
}

impl Uncertainty {
    pub fn zero(num_aps: usize, num_users: usize) -> Self {
        Self { num_users, values: vec![(0.0, 0.0); num_aps * num_users] }
    }

    /// MSE oracle at the strongest estimated path, plus the reciprocity
    /// variances on the downlink.
    pub fn from_estimates(est: &MultipathEstimate, config: &SystemConfig, direction: Direction) -> Self {
        let (ru, rb) = match direction {
            Direction::Downlink => (config.reciprocity_var_upsilon, config.reciprocity_var_beta),
            Direction::Uplink => (0.0, 0.0),
        };
        let values = est
            .links()
            .iter()
            .map(|link| {
                let o = link_oracle(link, config);
                (ru + o.mse_upsilon, rb + o.mse_beta)
            })
            .collect();
        Self { num_users: est.num_users, values }
    }

    pub fn get(&self, m: usize, k: usize) -> (f64, f64) {
        self.values[m * self.num_users + k]
    }
}

/// `Ĝ = Â B̂`
pub fn precoder_amf(link: &LinkEstimate, n: usize) -> CMat {
    link.steering_gain(n)
}

fn stacked(links: &[&LinkEstimate], n: usize) -> CMat {
    let cols: usize = links.iter().map(|l| l.num_paths()).sum();
    let mut x = CMat::zeros(n, cols);
    let mut at = 0;
    for link in links {
        let g = link.steering_gain(n);
        x.columns_mut(at, g.ncols()).copy_from(&g);
        at += g.ncols();
    }
    x
}

fn split_blocks(g: &CMat, links: &[&LinkEstimate]) -> Vec<CMat> {
    let mut at = 0;
    links
        .iter()
        .map(|l| {
            let b = g.columns(at, l.num_paths()).into_owned();
            at += l.num_paths();
            b
        })
        .collect()
}

/// `Ĝ_m = X (X^H X)^{-1}` with `X = Â_m B̂_m`, split per user. The flag is
/// set when the Gram matrix needed diagonal loading.
pub fn precoder_azf(links: &[&LinkEstimate], n: usize) -> (Vec<CMat>, bool) {
    let x = stacked(links, n);
    let kl = x.ncols();
    let gram = x.adjoint() * &x;
    let scale = gram.trace().re / kl as f64;
    let well_posed = kl <= n && scale > 0.0 && {
        let e = sdp_kernel::eigh_dense(&gram);
        e.min() > 0.0 && e.max() / e.min() <= MAX_GRAM_CONDITION
    };
    if well_posed {
        if let Some(inv) = hpd_solve(&gram, &CMat::identity(kl, kl)) {
            return (split_blocks(&(&x * inv), links), false);
        }
    }
    let eps = ZF_LOADING * scale.max(f64::MIN_POSITIVE);
    // X (X^H X + εI)^{-1} = (X X^H + εI)^{-1} X; solve in the smaller dimension
    let g = if kl <= n {
        let loaded = gram + CMat::identity(kl, kl) * c(eps);
        &x * hpd_solve(&loaded, &CMat::identity(kl, kl)).expect("loaded Gram is positive definite")
    } else {
        let loaded = &x * x.adjoint() + CMat::identity(n, n) * c(eps);
        hpd_solve(&loaded, &x).expect("loaded outer Gram is positive definite")
    };
    (split_blocks(&g, links), true)
}

/// `Υ = σ̃_υ²(EÂB̂)(EÂB̂)^H + σ̃_υ²σ̃_β²(EÂ)(EÂ)^H + σ̃_β² ÂÂ^H`
pub fn uncertainty_covariance(link: &LinkEstimate, n: usize, su: f64, sb: f64) -> CMat {
    let a = link.steering(n);
    let ea = index_weighted(&a);
    let eab = index_weighted(&link.steering_gain(n));
    &eab * eab.adjoint() * c(su) + &ea * ea.adjoint() * c(su * sb) + &a * a.adjoint() * c(sb)
}

/// `(Σ_k (ÂB̂B̂^HÂ^H + Υ_k) + σ² I)^{-1} Â_k B̂_k` for every user of one AP.
pub fn precoder_ammse(links: &[&LinkEstimate], sigmas: &[(f64, f64)], noise_var: f64, n: usize) -> Vec<CMat> {
    assert_eq!(links.len(), sigmas.len());
    let x = stacked(links, n);
    let mut cov = &x * x.adjoint() + CMat::identity(n, n) * c(noise_var);
    for (link, &(su, sb)) in links.iter().zip(sigmas) {
        if su != 0.0 || sb != 0.0 {
            cov += uncertainty_covariance(link, n, su, sb);
        }
    }
    let g = hpd_solve(&cov, &x).expect("noise-loaded covariance is positive definite");
    split_blocks(&g, links)
}

/// Raw blocks `Ĝ_mk` (or `Ĉ_mk`) for every (m,k).
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub scheme: Scheme,
    pub direction: Direction,
    pub num_aps: usize,
    pub num_users: usize,
    pub antennas: usize,
    blocks: Vec<CMat>,
    /// per AP, A-ZF only
    pub ill_conditioned: Vec<bool>,
}

impl BlockSet {
    pub fn block(&self, m: usize, k: usize) -> &CMat {
        &self.blocks[m * self.num_users + k]
    }

    /// `Ĝ_mk/‖Ĝ_mk‖_F` on the downlink, `Ĉ_mk` on the uplink. A zero block
    /// stays zero.
    pub fn effective(&self, m: usize, k: usize) -> CMat {
        let b = self.block(m, k);
        match self.direction {
            Direction::Uplink => b.clone(),
            Direction::Downlink => {
                let norm = b.norm();
                if norm > 0.0 {
                    b * c(1.0 / norm)
                } else {
                    b.clone()
                }
            }
        }
    }

    pub fn zero_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.norm() == 0.0).count()
    }
}

pub fn build_blocks(
    est: &MultipathEstimate,
    scheme: Scheme,
    direction: Direction,
    unc: &Uncertainty,
    noise_var: f64,
) -> BlockSet {
    let (mm, kk, n) = (est.num_aps, est.num_users, est.antennas);
    let mut blocks = Vec::with_capacity(mm * kk);
    let mut ill = vec![false; mm];
    for (m, flag) in ill.iter_mut().enumerate() {
        let links: Vec<&LinkEstimate> = (0..kk).map(|k| est.link(m, k)).collect();
        match scheme {
            Scheme::Amf => blocks.extend(links.iter().map(|l| precoder_amf(l, n))),
            Scheme::Azf => {
                let (b, f) = precoder_azf(&links, n);
                *flag = f;
                blocks.extend(b);
            }
            Scheme::Ammse => {
                let sig: Vec<(f64, f64)> = (0..kk).map(|k| unc.get(m, k)).collect();
                blocks.extend(precoder_ammse(&links, &sig, noise_var, n));
            }
        }
    }
    BlockSet { scheme, direction, num_aps: mm, num_users: kk, antennas: n, blocks, ill_conditioned: ill }
}

/// Served (m,k) pairs, AP-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceMask {
    pub num_aps: usize,
    pub num_users: usize,
    pub served: Vec<bool>,
}

impl ServiceMask {
    pub fn all(num_aps: usize, num_users: usize) -> Self {
        Self { num_aps, num_users, served: vec![true; num_aps * num_users] }
    }

    pub fn get(&self, m: usize, k: usize) -> bool {
        self.served[m * self.num_users + k]
    }

    pub fn set(&mut self, m: usize, k: usize, v: bool) {
        self.served[m * self.num_users + k] = v;
    }

    /// `|𝒦_m|`
    pub fn served_by(&self, m: usize) -> usize {
        (0..self.num_users).filter(|&k| self.get(m, k)).count()
    }

    pub fn active_aps(&self) -> Vec<usize> {
        (0..self.num_aps).filter(|&m| self.served_by(m) > 0).collect()
    }
}

/// Complex path weights `γ_mk`, AP-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub num_users: usize,
    pub gamma: Vec<CVec>,
}

impl Weights {
    pub fn get(&self, m: usize, k: usize) -> &CVec {
        &self.gamma[m * self.num_users + k]
    }

    pub fn uniform(num_aps: usize, num_users: usize, l: usize, value: f64) -> Self {
        Self { num_users, gamma: vec![CVec::from_element(l, c(value)); num_aps * num_users] }
    }
}

/// Uplink default `γ_mk,l = 1/L`, zero for unserved pairs.
pub fn uplink_default_weights(blocks: &BlockSet, mask: &ServiceMask, l: usize) -> Weights {
    let mut w = Weights::uniform(blocks.num_aps, blocks.num_users, l, 1.0 / l as f64);
    for m in 0..blocks.num_aps {
        for k in 0..blocks.num_users {
            if !mask.get(m, k) {
                w.gamma[m * blocks.num_users + k] = CVec::zeros(l);
            }
        }
    }
    w
}

/// Downlink weights along the uniform direction `1/√L`, scaled so that user
/// `k` gets the share `shares[m·K+k]` of AP `m`'s budget:
/// `‖Ĝ_mk γ_mk‖²/‖Ĝ_mk‖_F² = share`.
pub fn downlink_weights_from_shares(blocks: &BlockSet, shares: &[f64], l: usize) -> Weights {
    let kk = blocks.num_users;
    let u = CVec::from_element(l, c(1.0 / (l as f64).sqrt()));
    let gamma = (0..blocks.num_aps * kk)
        .map(|i| {
            let (m, k) = (i / kk, i % kk);
            let p = (blocks.effective(m, k) * &u).norm_squared();
            if shares[i] > 0.0 && p > 0.0 {
                &u * c((shares[i] / p).sqrt())
            } else {
                CVec::zeros(l)
            }
        })
        .collect();
    Weights { num_users: kk, gamma }
}

/// Every served user gets `1/|𝒦_m|` of the AP budget.
pub fn equal_power_weights(blocks: &BlockSet, mask: &ServiceMask, l: usize) -> Weights {
    let kk = blocks.num_users;
    let shares: Vec<f64> = (0..blocks.num_aps * kk)
        .map(|i| {
            let (m, k) = (i / kk, i % kk);
            if mask.get(m, k) {
                1.0 / mask.served_by(m) as f64
            } else {
                0.0
            }
        })
        .collect();
    downlink_weights_from_shares(blocks, &shares, l)
}

/// Assembled vectors per (m,k), AP-major.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub scheme: Scheme,
    pub direction: Direction,
    pub num_aps: usize,
    pub num_users: usize,
    vectors: Vec<CVec>,
    /// pairs whose block had zero norm
    pub zero_blocks: usize,
}

impl BeamformerSet {
    pub fn vector(&self, m: usize, k: usize) -> &CVec {
        &self.vectors[m * self.num_users + k]
    }

    pub fn vectors(&self) -> &[CVec] {
        &self.vectors
    }

    /// `Σ_k ‖w_mk‖²`: fraction of AP `m`'s budget in use (downlink).
    pub fn ap_power(&self, m: usize) -> f64 {
        (0..self.num_users).map(|k| self.vector(m, k).norm_squared()).sum()
    }

    /// Scales every vector (used for UL homogeneity checks).
    pub fn scaled(&self, s: f64) -> Self {
        Self { vectors: self.vectors.iter().map(|v| v * c(s)).collect(), ..self.clone() }
    }
}

pub fn assemble(blocks: &BlockSet, weights: &Weights) -> BeamformerSet {
    let kk = blocks.num_users;
    let vectors = (0..blocks.num_aps * kk)
        .map(|i| blocks.effective(i / kk, i % kk) * weights.gamma[i].clone())
        .collect();
    BeamformerSet {
        scheme: blocks.scheme,
        direction: blocks.direction,
        num_aps: blocks.num_aps,
        num_users: kk,
        vectors,
        zero_blocks: blocks.zero_blocks(),
    }
}
