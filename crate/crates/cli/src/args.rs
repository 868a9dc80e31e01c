//! Command-line surface.

use std::path::PathBuf;

use cellfree_core::beamforming::{Direction, Scheme};
use cellfree_core::{AngleAveraging, SystemConfig};
use clap::{Args, Parser, Subcommand};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "cellfree-fdd", version, about = "Cell-free FDD massive MIMO experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-path estimation RMSE versus SNR against the closed-form MSE.
    EstimateRmse(EstimateRmseArgs),
    /// DL/UL sum rate per scheme versus SNR, closed form and genie-aided.
    SeVsSnr(SeVsSnrArgs),
    /// DL spectral efficiency versus number of APs at fixed total antennas.
    SeVsAps(SeVsApsArgs),
    /// DL spectral efficiency versus antennas per AP.
    SeVsAntennas(SeVsAntennasArgs),
    /// Max-min power control: bisection trace and per-user rates.
    Maxmin(MaxminArgs),
    /// Energy efficiency of cell-free and user-centric operation versus APs.
    EeVsAps(EeVsApsArgs),
    /// Empirical CDF of per-user DL rates per power-control policy.
    Cdf(CdfArgs),
    /// List the experiments.
    Catalog {
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EstimateRmse(_) => "estimate-rmse",
            Command::SeVsSnr(_) => "se-vs-snr",
            Command::SeVsAps(_) => "se-vs-aps",
            Command::SeVsAntennas(_) => "se-vs-antennas",
            Command::Maxmin(_) => "maxmin",
            Command::EeVsAps(_) => "ee-vs-aps",
            Command::Cdf(_) => "cdf",
            Command::Catalog { .. } => "catalog",
        }
    }

    pub fn common(&self) -> Option<&Common> {
        match self {
            Command::EstimateRmse(a) => Some(&a.common),
            Command::SeVsSnr(a) => Some(&a.common),
            Command::SeVsAps(a) => Some(&a.common),
            Command::SeVsAntennas(a) => Some(&a.common),
            Command::Maxmin(a) => Some(&a.common),
            Command::EeVsAps(a) => Some(&a.common),
            Command::Cdf(a) => Some(&a.common),
            Command::Catalog { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with SystemConfig fields; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed (same as --rng-seed).
    #[arg(long, alias = "rng-seed")]
    pub seed: Option<u64>,
    /// Monte-Carlo instances.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, env = "CELLFREE_OUT_DIR", default_value = "results")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// One flag per SystemConfig field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub num_aps: Option<usize>,
    #[arg(long)]
    pub antennas_per_ap: Option<usize>,
    #[arg(long)]
    pub num_users: Option<usize>,
    #[arg(long)]
    pub num_paths: Option<usize>,
    #[arg(long)]
    pub pilot_len: Option<usize>,
    #[arg(long)]
    pub angle_coherence: Option<usize>,
    #[arg(long)]
    pub snapshots: Option<usize>,
    #[arg(long)]
    pub pilot_power: Option<f64>,
    #[arg(long)]
    pub ul_power: Option<f64>,
    #[arg(long)]
    pub dl_power: Option<f64>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub antenna_spacing_ratio: Option<f64>,
    #[arg(long)]
    pub reciprocity_var_upsilon: Option<f64>,
    #[arg(long)]
    pub reciprocity_var_beta: Option<f64>,
    #[arg(long)]
    pub ee_amp_efficiency: Option<f64>,
    #[arg(long)]
    pub ee_circuit_power: Option<f64>,
    #[arg(long)]
    pub ee_backhaul_fixed: Option<f64>,
    #[arg(long)]
    pub ee_backhaul_traffic: Option<f64>,
    #[arg(long)]
    pub uc_threshold: Option<f64>,
    #[arg(long)]
    pub square_side: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub shadow_std_db: Option<f64>,
    #[arg(long, value_parser = parse_averaging)]
    pub angle_averaging: Option<AngleAveraging>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SystemConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    cfg.$f = v;
                }
            )*};
        }
        set!(
            num_aps,
            antennas_per_ap,
            num_users,
            num_paths,
            pilot_len,
            angle_coherence,
            snapshots,
            pilot_power,
            ul_power,
            dl_power,
            noise_var,
            bandwidth,
            grid_size,
            antenna_spacing_ratio,
            reciprocity_var_upsilon,
            reciprocity_var_beta,
            ee_amp_efficiency,
            ee_circuit_power,
            ee_backhaul_fixed,
            ee_backhaul_traffic,
            uc_threshold,
            square_side,
            shadow_std_db,
            angle_averaging
        );
    }
}

impl Common {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<SystemConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                SystemConfig::from_toml_str(&text).map_err(|e| CliError::Usage(e.to_string()))?
            }
            None => SystemConfig::default(),
        };
        self.overrides.apply(&mut cfg);
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateRmseArgs {
    #[command(flatten)]
    pub common: Common,
    /// dB; `start:step:stop` or a comma list.
    #[arg(long, default_value = "-10:5:20", allow_hyphen_values = true, value_parser = parse_sweep)]
    pub snr: Sweep,
}

#[derive(Debug, Clone, Args)]
pub struct SeVsSnrArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "-10:5:30", allow_hyphen_values = true, value_parser = parse_sweep)]
    pub snr: Sweep,
    #[arg(long, value_delimiter = ',', default_value = "A-MF,A-ZF,A-MMSE")]
    pub schemes: Vec<Scheme>,
    /// Fresh fading draws per instance for the genie-aided rate (0 disables it).
    #[arg(long, default_value_t = 100)]
    pub genie_trials: usize,
    /// Coherent sum over APs in the genie-aided signal and interference.
    #[arg(long)]
    pub coherent_signal: bool,
    /// Feed ground-truth multipath components instead of estimates.
    #[arg(long)]
    pub exact_estimates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SeVsApsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Total antennas N·M, held fixed.
    #[arg(long, default_value_t = 320)]
    pub nm: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,40")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, value_delimiter = ',', default_value = "A-MF,A-ZF,A-MMSE")]
    pub schemes: Vec<Scheme>,
}

#[derive(Debug, Clone, Args)]
pub struct SeVsAntennasArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, value_delimiter = ',', default_value = "A-MF,A-ZF,A-MMSE")]
    pub schemes: Vec<Scheme>,
}

#[derive(Debug, Clone, Args)]
pub struct MaxminArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, default_value = "A-MMSE")]
    pub scheme: Scheme,
    #[arg(long, value_delimiter = ',', default_value = "dl,ul", value_parser = parse_direction)]
    pub directions: Vec<Direction>,
    /// Relative bisection tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Keep the uncertainty term as a function of the weights during bisection.
    #[arg(long)]
    pub exact_uncertainty: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EeVsApsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,40")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, default_value = "A-MMSE")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Args)]
pub struct CdfArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, default_value = "A-MMSE")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long)]
    pub exact_uncertainty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

/// `start:step:stop` (inclusive) or `a,b,c`.
pub fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, step, b] = parts[..] else {
            return Err(format!("expected start:step:stop, got `{s}`"));
        };
        let (a, step, b) = (num(a)?, num(step)?, num(b)?);
        if !(step > 0.0) || b < a {
            return Err(format!("empty or unbounded sweep `{s}`"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| a + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("sweep `{s}` must hold finite values"));
    }
    Ok(Sweep(values))
}

fn parse_averaging(s: &str) -> Result<AngleAveraging, String> {
    match s {
        "phi" => Ok(AngleAveraging::Phi),
        "upsilon" => Ok(AngleAveraging::Upsilon),
        _ => Err(format!("expected `phi` or `upsilon`, got `{s}`")),
    }
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "dl" | "downlink" => Ok(Direction::Downlink),
        "ul" | "uplink" => Ok(Direction::Uplink),
        _ => Err(format!("expected `dl` or `ul`, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_forms() {
        assert_eq!(parse_sweep("-10:5:20").unwrap().0, vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_sweep("0,10").unwrap().0, vec![0.0, 10.0]);
        assert_eq!(parse_sweep("3").unwrap().0, vec![3.0]);
        assert!(parse_sweep("1:0:3").is_err());
        assert!(parse_sweep("5:1:0").is_err());
        assert!(parse_sweep("a,b").is_err());
    }

    #[test]
    fn flags_override_config_fields() {
        let cli = Cli::try_parse_from(["x", "se-vs-aps", "--num-users", "4", "--pilot-len", "4", "--seed", "9"]).unwrap();
        let cfg = cli.command.common().unwrap().resolve_config().unwrap();
        assert_eq!(cfg.num_users, 4);
        assert_eq!(cfg.pilot_len, 4);
        assert_eq!(cfg.rng_seed, 9);
        assert_eq!(cfg.num_aps, SystemConfig::default().num_aps);
    }
}
