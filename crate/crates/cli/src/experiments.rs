//! Experiment runners. Each returns its tables; nothing here touches disk.

use cellfree_core::allocation::{AllocationOptions, UncertaintyModel};
use cellfree_core::beamforming::{Direction, Scheme, ServiceMask};
use cellfree_core::estimation::{mse_with, single_path_errors};
use cellfree_core::performance::rate_genie;
use cellfree_core::rng::TrialStreams;
use cellfree_core::scenario::{evaluate, Instance, PowerControl};
use cellfree_core::{CoreError, SystemConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::table::{mean_stderr, Cell, Table};
use crate::CliError;

pub struct Context {
    pub config: SystemConfig,
    pub trials: usize,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(config: SystemConfig, trials: usize, workers: Option<usize>) -> Result<Self, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = workers {
            builder = builder.num_threads(w);
        }
        let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        Ok(Self { config, trials, pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` once per trial on the pool; output is in trial order.
    pub fn map_trials<T, F>(&self, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(TrialStreams) -> Result<T, CoreError> + Sync + Send,
    {
        let seed = self.config.rng_seed;
        let out: Result<Vec<T>, CoreError> =
            self.pool.install(|| (0..self.trials as u64).into_par_iter().map(|t| f(TrialStreams::new(seed, t))).collect());
        Ok(out?)
    }
}

pub struct Outcome {
    pub tables: Vec<Table>,
    pub parameters: serde_json::Value,
}

fn scheme_labels(schemes: &[Scheme]) -> Vec<&'static str> {
    schemes.iter().map(|s| s.label()).collect()
}

fn mode_masks(inst: &Instance) -> [(&'static str, ServiceMask); 2] {
    [("cf", inst.full_mask()), ("uc", inst.uc_mask())]
}

fn policies(direction: Direction) -> &'static [PowerControl] {
    match direction {
        Direction::Downlink => &[PowerControl::Equal, PowerControl::WaterFilling, PowerControl::MaxMin],
        Direction::Uplink => &[PowerControl::Equal, PowerControl::MaxMin],
    }
}

fn allocation_options(epsilon: f64, exact: bool) -> Result<AllocationOptions, CliError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CliError::Usage(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let uncertainty = if exact { UncertaintyModel::Exact } else { UncertaintyModel::Fixed };
    Ok(AllocationOptions { epsilon, uncertainty, ..AllocationOptions::default() })
}

fn checked(cfg: SystemConfig) -> Result<SystemConfig, CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Single-path estimator against the closed-form MSE. SNR is per antenna,
/// `ρβ/(Nσ²)` with `β = 1`.
pub fn estimate_rmse(ctx: &Context, snrs: &[f64]) -> Result<Outcome, CliError> {
    let cfg = checked(SystemConfig { num_paths: 1, ..ctx.config.clone() })?;
    let n = cfg.antennas_per_ap;
    let noise: Vec<f64> = snrs.iter().map(|s| cfg.pilot_power / (n as f64 * 10f64.powf(s / 10.0))).collect();
    let trials = ctx.map_trials(|st| Ok(single_path_errors(&cfg, 1.0, &noise, &st)))?;
    let mut table = Table::new(
        "estimate_rmse",
        &["snr_db", "rmse_upsilon_sim", "rmse_upsilon_theory", "rmse_beta_norm_sim", "rmse_beta_norm_theory"],
    );
    let count = trials.len() as f64;
    for (i, (&snr, &s2)) in snrs.iter().zip(&noise).enumerate() {
        let mut sums = [0.0; 4];
        for (phi, errs) in &trials {
            let oracle = mse_with(*phi, 1.0, cfg.pilot_power, s2, n, cfg.eta());
            sums[0] += errs[i].0;
            sums[1] += oracle.mse_upsilon;
            sums[2] += errs[i].1;
            sums[3] += oracle.mse_beta;
        }
        let [a, b, c, d] = sums.map(|s| (s / count).sqrt());
        table.push(vec![snr.into(), a.into(), b.into(), c.into(), d.into()]);
    }
    Ok(Outcome { tables: vec![table], parameters: json!({ "snr_db": snrs, "beta": 1.0, "num_paths": 1 }) })
}

#[derive(Debug, Clone)]
pub struct SeVsSnrOptions {
    pub snrs: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub genie_trials: usize,
    pub coherent: bool,
    pub exact_estimates: bool,
}

/// Per-user closed-form and genie-aided rates, equal power.
pub fn se_vs_snr(ctx: &Context, opts: &SeVsSnrOptions) -> Result<Outcome, CliError> {
    let base = checked(ctx.config.clone())?;
    let dirs = [Direction::Downlink, Direction::Uplink];
    let alloc = AllocationOptions::default();
    // per trial: [snr][dir][scheme] -> (closed, genie, genie stderr)
    type Cellv = (Vec<f64>, Option<(Vec<f64>, Vec<f64>)>);
    let trials: Vec<Vec<Cellv>> = ctx.map_trials(|st| {
        let mut out = Vec::new();
        for &snr in &opts.snrs {
            let cfg = base.with_snr_db(snr);
            let inst = if opts.exact_estimates { Instance::exact(&cfg, &st)? } else { Instance::draw(&cfg, &st)? };
            for &dir in &dirs {
                for &scheme in &opts.schemes {
                    let ev = evaluate(&inst, scheme, dir, PowerControl::Equal, &inst.full_mask(), &alloc)?;
                    let genie = (opts.genie_trials > 0).then(|| {
                        let truth = match dir {
                            Direction::Downlink => &inst.downlink,
                            Direction::Uplink => &inst.uplink,
                        };
                        let g = rate_genie(truth, &ev.beamformers, &cfg, opts.genie_trials, opts.coherent, &st);
                        (g.rate, g.stderr)
                    });
                    out.push((ev.rates.rate, genie));
                }
            }
        }
        Ok(out)
    })?;
    let k = base.num_users;
    let mut table = Table::new("se_vs_snr", &["direction", "scheme", "snr_db", "metric", "user", "value", "stderr"]);
    let mut idx = 0;
    for &snr in &opts.snrs {
        for &dir in &dirs {
            for &scheme in &opts.schemes {
                let cells: Vec<&Cellv> = trials.iter().map(|t| &t[idx]).collect();
                idx += 1;
                let mut emit = |metric: &str, per_user: &dyn Fn(&Cellv) -> Option<(Vec<f64>, Vec<f64>)>| {
                    let vals: Vec<(Vec<f64>, Vec<f64>)> = cells.iter().filter_map(|c| per_user(c)).collect();
                    if vals.is_empty() {
                        return;
                    }
                    let users: Vec<Cell> = (0..k).map(Cell::from).chain([Cell::from("sum")]).collect();
                    for (u, user) in users.into_iter().enumerate() {
                        let pick = |v: &Vec<f64>| if u < k { v[u] } else { v.iter().sum() };
                        let xs: Vec<f64> = vals.iter().map(|(v, _)| pick(v)).collect();
                        let (mean, mut se) = mean_stderr(&xs);
                        if vals.len() == 1 {
                            // one instance: report the within-instance Monte-Carlo error
                            let s = &vals[0].1;
                            se = if u < k { s[u] } else { s.iter().map(|x| x * x).sum::<f64>().sqrt() };
                        }
                        table.push(vec![
                            dir.label().into(),
                            scheme.label().into(),
                            snr.into(),
                            metric.into(),
                            user,
                            mean.into(),
                            se.into(),
                        ]);
                    }
                };
                emit("rate_closed", &|c: &Cellv| Some((c.0.clone(), vec![0.0; k])));
                emit("rate_genie", &|c: &Cellv| c.1.clone());
            }
        }
    }
    Ok(Outcome {
        tables: vec![table],
        parameters: json!({
            "snr_db": opts.snrs,
            "schemes": scheme_labels(&opts.schemes),
            "genie_trials": opts.genie_trials,
            "coherent_signal": opts.coherent,
            "exact_estimates": opts.exact_estimates,
            "power_control": "equal",
        }),
    })
}

/// Mean DL sum SE (κ·Σ rate) per (geometry, scheme) under equal power.
fn sum_se_sweep(
    ctx: &Context,
    geometries: &[SystemConfig],
    schemes: &[Scheme],
    name: &str,
) -> Result<Table, CliError> {
    let alloc = AllocationOptions::default();
    let trials: Vec<Vec<f64>> = ctx.map_trials(|st| {
        let mut out = Vec::new();
        for cfg in geometries {
            let inst = Instance::draw(cfg, &st)?;
            for &scheme in schemes {
                let ev = evaluate(&inst, scheme, Direction::Downlink, PowerControl::Equal, &inst.full_mask(), &alloc)?;
                out.push(ev.rates.throughput());
            }
        }
        Ok(out)
    })?;
    let mut table = Table::new(name, &["num_aps", "antennas_per_ap", "scheme", "sum_se", "stderr"]);
    let mut idx = 0;
    for cfg in geometries {
        for &scheme in schemes {
            let xs: Vec<f64> = trials.iter().map(|t| t[idx]).collect();
            idx += 1;
            let (mean, se) = mean_stderr(&xs);
            table.push(vec![cfg.num_aps.into(), cfg.antennas_per_ap.into(), scheme.label().into(), mean.into(), se.into()]);
        }
    }
    Ok(table)
}

pub fn se_vs_aps(ctx: &Context, nm: usize, ms: &[usize], snr: f64, schemes: &[Scheme]) -> Result<Outcome, CliError> {
    let base = ctx.config.with_snr_db(snr);
    let geometries = ms
        .iter()
        .map(|&m| {
            if m == 0 || !nm.is_multiple_of(m) {
                return Err(CliError::Usage(format!("--nm {nm} is not divisible by M = {m}")));
            }
            checked(SystemConfig { num_aps: m, antennas_per_ap: nm / m, ..base.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = sum_se_sweep(ctx, &geometries, schemes, "se_vs_aps")?;
    Ok(Outcome {
        tables: vec![table],
        parameters: json!({ "nm": nm, "m": ms, "snr_db": snr, "schemes": scheme_labels(schemes), "power_control": "equal" }),
    })
}

pub fn se_vs_antennas(ctx: &Context, ns: &[usize], snr: f64, schemes: &[Scheme]) -> Result<Outcome, CliError> {
    let base = ctx.config.with_snr_db(snr);
    let geometries = ns
        .iter()
        .map(|&n| checked(SystemConfig { antennas_per_ap: n, ..base.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    let table = sum_se_sweep(ctx, &geometries, schemes, "se_vs_antennas")?;
    Ok(Outcome {
        tables: vec![table],
        parameters: json!({ "n": ns, "snr_db": snr, "schemes": scheme_labels(schemes), "power_control": "equal" }),
    })
}

/// Per-user rates of one (direction, mode, policy) cell plus its trace.
#[derive(Debug, Clone)]
struct PolicyRun {
    direction: Direction,
    mode: &'static str,
    policy: PowerControl,
    rates: Vec<f64>,
    trace: Vec<(f64, bool)>,
}

fn policy_runs(
    inst: &Instance,
    scheme: Scheme,
    directions: &[Direction],
    opts: &AllocationOptions,
) -> Result<Vec<PolicyRun>, CoreError> {
    let mut out = Vec::new();
    for &direction in directions {
        for (mode, mask) in mode_masks(inst) {
            for &policy in policies(direction) {
                let ev = evaluate(inst, scheme, direction, policy, &mask, opts)?;
                let trace = ev.allocation.map(|a| a.trace).unwrap_or_default();
                out.push(PolicyRun { direction, mode, policy, rates: ev.rates.rate, trace });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MaxminOptions {
    pub snr: f64,
    pub scheme: Scheme,
    pub directions: Vec<Direction>,
    pub epsilon: f64,
    pub exact_uncertainty: bool,
}

pub fn maxmin(ctx: &Context, opts: &MaxminOptions) -> Result<Outcome, CliError> {
    let cfg = checked(ctx.config.with_snr_db(opts.snr))?;
    let alloc = allocation_options(opts.epsilon, opts.exact_uncertainty)?;
    let trials = ctx.map_trials(|st| policy_runs(&Instance::draw(&cfg, &st)?, opts.scheme, &opts.directions, &alloc))?;

    let mut trace = Table::new("maxmin_trace", &["instance", "direction", "mode", "step", "mu", "feasible"]);
    let mut rates = Table::new("maxmin_rates", &["instance", "direction", "mode", "policy", "user", "rate"]);
    for (i, runs) in trials.iter().enumerate() {
        for r in runs {
            for (step, &(mu, ok)) in r.trace.iter().enumerate() {
                trace.push(vec![i.into(), r.direction.label().into(), r.mode.into(), step.into(), mu.into(), ok.into()]);
            }
            for (u, &rate) in r.rates.iter().enumerate() {
                rates.push(vec![
                    i.into(),
                    r.direction.label().into(),
                    r.mode.into(),
                    r.policy.label().into(),
                    u.into(),
                    rate.into(),
                ]);
            }
        }
    }

    let mut summary = Table::new("maxmin_summary", &["direction", "mode", "policy", "metric", "value", "stderr"]);
    let cells = trials.first().map(|r| r.len()).unwrap_or(0);
    for c in 0..cells {
        let head = &trials[0][c];
        let equal = trials[0]
            .iter()
            .position(|r| r.direction == head.direction && r.mode == head.mode && r.policy == PowerControl::Equal)
            .expect("equal power is always evaluated");
        let per: Vec<(f64, f64, f64, f64)> = trials
            .iter()
            .map(|runs| {
                let (run, eq) = (&runs[c], &runs[equal]);
                let sum: f64 = run.rates.iter().sum();
                let min = run.rates.iter().cloned().fold(f64::INFINITY, f64::min);
                let eq_sum: f64 = eq.rates.iter().sum();
                let eq_min = eq.rates.iter().cloned().fold(f64::INFINITY, f64::min);
                (sum, min, sum / eq_sum - 1.0, min - eq_min)
            })
            .collect();
        let columns: [(&str, fn(&(f64, f64, f64, f64)) -> f64); 4] = [
            ("sum_rate", |p| p.0),
            ("min_rate", |p| p.1),
            ("sum_rate_gain_vs_equal", |p| p.2),
            ("min_rate_diff_vs_equal", |p| p.3),
        ];
        for (metric, get) in columns {
            let (mean, se) = mean_stderr(&per.iter().map(get).collect::<Vec<_>>());
            summary.push(vec![
                head.direction.label().into(),
                head.mode.into(),
                head.policy.label().into(),
                metric.into(),
                mean.into(),
                se.into(),
            ]);
        }
    }
    Ok(Outcome {
        tables: vec![trace, rates, summary],
        parameters: json!({
            "snr_db": opts.snr,
            "scheme": opts.scheme.label(),
            "directions": opts.directions.iter().map(|d| d.label()).collect::<Vec<_>>(),
            "epsilon": opts.epsilon,
            "uncertainty_model": if opts.exact_uncertainty { "exact" } else { "fixed" },
        }),
    })
}

pub fn ee_vs_aps(ctx: &Context, ms: &[usize], snr: f64, scheme: Scheme) -> Result<Outcome, CliError> {
    let base = ctx.config.with_snr_db(snr);
    let geometries =
        ms.iter().map(|&m| checked(SystemConfig { num_aps: m, ..base.clone() })).collect::<Result<Vec<_>, _>>()?;
    let alloc = AllocationOptions::default();
    let trials: Vec<Vec<[f64; 3]>> = ctx.map_trials(|st| {
        let mut out = Vec::new();
        for cfg in &geometries {
            let inst = Instance::draw(cfg, &st)?;
            for (_, mask) in mode_masks(&inst) {
                let ev = evaluate(&inst, scheme, Direction::Downlink, PowerControl::Equal, &mask, &alloc)?;
                out.push([ev.energy.ee, ev.energy.total_power, ev.rates.throughput()]);
            }
        }
        Ok(out)
    })?;
    let mut table = Table::new("ee_vs_aps", &["num_aps", "mode", "metric", "value", "stderr"]);
    let mut idx = 0;
    for cfg in &geometries {
        for mode in ["cf", "uc"] {
            for (j, metric) in ["ee_bit_per_joule", "total_power_w", "sum_se"].into_iter().enumerate() {
                let (mean, se) = mean_stderr(&trials.iter().map(|t| t[idx][j]).collect::<Vec<_>>());
                table.push(vec![cfg.num_aps.into(), mode.into(), metric.into(), mean.into(), se.into()]);
            }
            idx += 1;
        }
    }
    Ok(Outcome {
        tables: vec![table],
        parameters: json!({ "m": ms, "snr_db": snr, "scheme": scheme.label(), "power_control": "equal" }),
    })
}

pub fn cdf(ctx: &Context, snr: f64, scheme: Scheme, epsilon: f64, exact: bool) -> Result<Outcome, CliError> {
    let cfg = checked(ctx.config.with_snr_db(snr))?;
    let alloc = allocation_options(epsilon, exact)?;
    let trials = ctx.map_trials(|st| policy_runs(&Instance::draw(&cfg, &st)?, scheme, &[Direction::Downlink], &alloc))?;
    let mut table = Table::new("cdf", &["mode", "policy", "rate", "cdf"]);
    for c in 0..trials.first().map(|r| r.len()).unwrap_or(0) {
        let head = &trials[0][c];
        let mut pooled: Vec<f64> = trials.iter().flat_map(|runs| runs[c].rates.iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len() as f64;
        for (i, r) in pooled.into_iter().enumerate() {
            table.push(vec![head.mode.into(), head.policy.label().into(), r.into(), ((i + 1) as f64 / n).into()]);
        }
    }
    Ok(Outcome {
        tables: vec![table],
        parameters: json!({
            "snr_db": snr,
            "scheme": scheme.label(),
            "direction": "dl",
            "epsilon": epsilon,
            "uncertainty_model": if exact { "exact" } else { "fixed" },
        }),
    })
}
