//! Experiment runner: one subcommand per figure, CSV tables plus a manifest.

pub mod args;
pub mod catalog;
pub mod experiments;
pub mod table;

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use cellfree_core::CoreError;

use crate::args::{Cli, Command};
use crate::experiments::{Context, MaxminOptions, Outcome, SeVsSnrOptions};
use crate::table::{prepare_out_dir, write_manifest, Manifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot write to {}: {reason}", path.display())]
    OutDir { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::OutDir { .. } => 3,
            CliError::Core(_) => 1,
        }
    }
}

/// Runs one parsed command; returns the manifest when files were written.
pub fn run(cli: &Cli) -> Result<Option<Manifest>, CliError> {
    if let Command::Catalog { json } = cli.command {
        if json {
            println!("{}", catalog::render_json());
        } else {
            print!("{}", catalog::render_text());
        }
        return Ok(None);
    }
    let common = cli.command.common().expect("experiments carry common flags");
    let config = common.resolve_config()?;
    let out_dir = prepare_out_dir(&common.out_dir)?;
    let ctx = Context::new(config.clone(), common.trials as usize, common.workers.map(|w| w as usize))?;

    let outcome: Outcome = match &cli.command {
        Command::EstimateRmse(a) => experiments::estimate_rmse(&ctx, &a.snr.0)?,
        Command::SeVsSnr(a) => experiments::se_vs_snr(
            &ctx,
            &SeVsSnrOptions {
                snrs: a.snr.0.clone(),
                schemes: a.schemes.clone(),
                genie_trials: a.genie_trials,
                coherent: a.coherent_signal,
                exact_estimates: a.exact_estimates,
            },
        )?,
        Command::SeVsAps(a) => experiments::se_vs_aps(&ctx, a.nm, &a.m, a.snr, &a.schemes)?,
        Command::SeVsAntennas(a) => experiments::se_vs_antennas(&ctx, &a.n, a.snr, &a.schemes)?,
        Command::Maxmin(a) => experiments::maxmin(
            &ctx,
            &MaxminOptions {
                snr: a.snr,
                scheme: a.scheme,
                directions: a.directions.clone(),
                epsilon: a.epsilon,
                exact_uncertainty: a.exact_uncertainty,
            },
        )?,
        Command::EeVsAps(a) => experiments::ee_vs_aps(&ctx, &a.m, a.snr, a.scheme)?,
        Command::Cdf(a) => experiments::cdf(&ctx, a.snr, a.scheme, a.epsilon, a.exact_uncertainty)?,
        Command::Catalog { .. } => unreachable!(),
    };

    let files = outcome.tables.iter().map(|t| t.write_csv(&out_dir)).collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        experiment: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.rng_seed,
        trials: ctx.trials,
        workers: ctx.workers(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        parameters: outcome.parameters,
        config: serde_json::to_value(&config).expect("config serializes"),
        files,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(Some(manifest))
}
