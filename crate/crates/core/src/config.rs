//! Scenario parameters.
//!
//! Large-scale gains inside the simulator are expressed relative to the
//! path loss at distance `square_side / 2` (NLOS, no shadowing). `noise_var`
//! lives on the same scale, so `dl_power / noise_var` is the downlink SNR of a
//! reference link and SNR sweeps only touch `noise_var`.

use serde::{Deserialize, Serialize};

use crate::CoreError;

/// How per-snapshot angle estimates are combined over `T` snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AngleAveraging {
    /// Mean of arcsin outputs (the algorithm listing).
    #[default]
    Phi,
    /// Mean of spatial frequencies, then one arcsin.
    Upsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    pub num_paths: usize,
    pub pilot_len: usize,
    pub angle_coherence: usize,
    pub snapshots: usize,
    /// W
    pub pilot_power: f64,
    /// W
    pub ul_power: f64,
    /// W
    pub dl_power: f64,
    /// W, referred to the reference gain (see module docs).
    pub noise_var: f64,
    /// Hz
    pub bandwidth: f64,
    pub grid_size: usize,
    /// u/λ
    pub antenna_spacing_ratio: f64,
    pub reciprocity_var_upsilon: f64,
    pub reciprocity_var_beta: f64,
    /// ϑ
    pub ee_amp_efficiency: f64,
    /// W per antenna
    pub ee_circuit_power: f64,
    /// W per AP
    pub ee_backhaul_fixed: f64,
    /// W per Gbit/s
    pub ee_backhaul_traffic: f64,
    /// percent
    pub uc_threshold: f64,
    /// km
    pub square_side: f64,
    /// dB
    pub shadow_std_db: f64,
    pub angle_averaging: AngleAveraging,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 10,
            antennas_per_ap: 32,
            num_users: 20,
            num_paths: 3,
            pilot_len: 20,
            angle_coherence: 200,
            snapshots: 16,
            pilot_power: 0.2,
            ul_power: 0.2,
            dl_power: 1.0,
            noise_var: 0.1,
            bandwidth: 100e6,
            grid_size: 100,
            antenna_spacing_ratio: 0.5,
            reciprocity_var_upsilon: 1e-4,
            reciprocity_var_beta: 1e-4,
            ee_amp_efficiency: 0.2,
            ee_circuit_power: 0.2,
            ee_backhaul_fixed: 0.825,
            ee_backhaul_traffic: 0.25,
            uc_threshold: 95.0,
            square_side: 1.0,
            shadow_std_db: 8.0,
            angle_averaging: AngleAveraging::Phi,
            rng_seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CoreError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// η = 2π·u/λ
    pub fn eta(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.antenna_spacing_ratio
    }

    /// κ = 1 − τ/τ_c
    pub fn prelog(&self) -> f64 {
        1.0 - self.pilot_len as f64 / self.angle_coherence as f64
    }

    /// Noise variance giving `snr_db` on the reference downlink.
    pub fn noise_for_snr_db(&self, snr_db: f64) -> f64 {
        self.dl_power * 10f64.powf(-snr_db / 10.0)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { noise_var: self.noise_for_snr_db(snr_db), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let err = |m: &str| Err(CoreError::Config(m.to_string()));
        for (name, v) in [
            ("num_aps", self.num_aps),
            ("antennas_per_ap", self.antennas_per_ap),
            ("num_users", self.num_users),
            ("num_paths", self.num_paths),
            ("pilot_len", self.pilot_len),
            ("angle_coherence", self.angle_coherence),
            ("snapshots", self.snapshots),
        ] {
            if v == 0 {
                return err(&format!("{name} must be positive"));
            }
        }
        if self.grid_size < 2 {
            return err("grid_size must be at least 2");
        }
        if self.pilot_len < self.num_users {
            return err("pilot_len must be at least num_users for orthogonal pilots");
        }
        if self.pilot_len >= self.angle_coherence {
            return err("pilot_len must be smaller than angle_coherence");
        }
        if self.num_paths > self.antennas_per_ap {
            return err("num_paths cannot exceed antennas_per_ap");
        }
        for (name, v) in [
            ("pilot_power", self.pilot_power),
            ("ul_power", self.ul_power),
            ("dl_power", self.dl_power),
            ("noise_var", self.noise_var),
            ("bandwidth", self.bandwidth),
            ("square_side", self.square_side),
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
            ("ee_circuit_power", self.ee_circuit_power),
            ("ee_backhaul_fixed", self.ee_backhaul_fixed),
            ("ee_backhaul_traffic", self.ee_backhaul_traffic),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(&format!("{name} must be positive and finite"));
            }
        }
        for (name, v) in [
            ("reciprocity_var_upsilon", self.reciprocity_var_upsilon),
            ("reciprocity_var_beta", self.reciprocity_var_beta),
            ("shadow_std_db", self.shadow_std_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(&format!("{name} must be nonnegative and finite"));
            }
        }
        if !(self.uc_threshold > 0.0 && self.uc_threshold <= 100.0) {
            return err("uc_threshold must lie in (0, 100]");
        }
        if !(self.ee_amp_efficiency > 0.0 && self.ee_amp_efficiency <= 1.0) {
            return err("ee_amp_efficiency must lie in (0, 1]");
        }
        Ok(())
    }

    /// Whether the stacked per-AP A-ZF Gram matrix can be invertible.
    pub fn zf_dimension_ok(&self) -> bool {
        self.num_paths * self.num_users <= self.antennas_per_ap
    }
}
