//! One random network instance and the standard evaluation pipeline.

use crate::allocation::{
    baseline_weights, maxmin_allocate, select_aps_uc, waterfill_weights, AllocationOptions, AllocationResult,
};
use crate::beamforming::{assemble, build_blocks, BeamformerSet, BlockSet, Direction, Scheme, ServiceMask, Uncertainty, Weights};
use crate::channel::{apply_reciprocity, draw_channel, ChannelRealization};
use crate::config::SystemConfig;
use crate::estimation::{estimate_multipath, MultipathEstimate};
use crate::layout::{build_layout, Layout};
use crate::performance::{energy_efficiency, sinr_dl_closed, sinr_ul_closed, EnergyReport, RateReport};
use crate::rng::TrialStreams;
use crate::training::observe_pilots;
use crate::CoreError;

#[derive(Debug, Clone)]
pub struct Instance {
    pub config: SystemConfig,
    pub layout: Layout,
    pub uplink: ChannelRealization,
    pub downlink: ChannelRealization,
    pub estimate: MultipathEstimate,
}

impl Instance {
    /// Layout, channels, pilot observation and estimation for one trial.
    pub fn draw(config: &SystemConfig, streams: &TrialStreams) -> Result<Self, CoreError> {
        config.validate()?;
        let layout = build_layout(config, streams);
        let uplink = draw_channel(config, &layout, streams);
        let downlink = apply_reciprocity(&uplink, config, streams);
        let obs = observe_pilots(&uplink, config, streams);
        let estimate = estimate_multipath(&obs, config);
        Ok(Self { config: config.clone(), layout, uplink, downlink, estimate })
    }

    /// Same draw with the estimator replaced by the ground truth and the
    /// downlink equal to the uplink.
    pub fn exact(config: &SystemConfig, streams: &TrialStreams) -> Result<Self, CoreError> {
        config.validate()?;
        let layout = build_layout(config, streams);
        let uplink = draw_channel(config, &layout, streams);
        let estimate = MultipathEstimate::exact(&uplink);
        Ok(Self { config: config.clone(), layout, downlink: uplink.clone(), uplink, estimate })
    }

    pub fn uncertainty(&self, direction: Direction) -> Uncertainty {
        Uncertainty::from_estimates(&self.estimate, &self.config, direction)
    }

    pub fn blocks(&self, scheme: Scheme, direction: Direction) -> (BlockSet, Uncertainty) {
        let unc = self.uncertainty(direction);
        (build_blocks(&self.estimate, scheme, direction, &unc, self.config.noise_var), unc)
    }

    pub fn full_mask(&self) -> ServiceMask {
        ServiceMask::all(self.config.num_aps, self.config.num_users)
    }

    pub fn uc_mask(&self) -> ServiceMask {
        select_aps_uc(&self.estimate, self.config.uc_threshold)
    }

    pub fn rates(&self, bf: &BeamformerSet, unc: &Uncertainty) -> RateReport {
        match bf.direction {
            Direction::Downlink => sinr_dl_closed(&self.estimate, bf, unc, &self.config),
            Direction::Uplink => sinr_ul_closed(&self.estimate, bf, unc, &self.config),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerControl {
    Equal,
    WaterFilling,
    MaxMin,
}

impl PowerControl {
    pub fn label(self) -> &'static str {
        match self {
            PowerControl::Equal => "equal",
            PowerControl::WaterFilling => "waterfill",
            PowerControl::MaxMin => "maxmin",
        }
    }
}

/// Rates (and the vectors behind them) for one scheme and policy.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub beamformers: BeamformerSet,
    pub rates: RateReport,
    pub energy: EnergyReport,
    pub mask: ServiceMask,
    pub allocation: Option<AllocationResult>,
}

pub fn evaluate(
    instance: &Instance,
    scheme: Scheme,
    direction: Direction,
    policy: PowerControl,
    mask: &ServiceMask,
    opts: &AllocationOptions,
) -> Result<Evaluation, CoreError> {
    let cfg = &instance.config;
    let (blocks, unc) = instance.blocks(scheme, direction);
    let mut allocation = None;
    let weights: Weights = match (policy, direction) {
        (PowerControl::Equal, _) => baseline_weights(&blocks, mask, cfg.num_paths),
        (PowerControl::WaterFilling, Direction::Downlink) => waterfill_weights(&instance.estimate, &blocks, cfg, mask),
        (PowerControl::WaterFilling, Direction::Uplink) => {
            return Err(CoreError::Config("water-filling is a downlink policy".into()));
        }
        (PowerControl::MaxMin, _) => {
            let res = maxmin_allocate(&instance.estimate, &blocks, &unc, mask, cfg, opts)?;
            let w = res.weights.clone();
            allocation = Some(res);
            w
        }
    };
    let beamformers = assemble(&blocks, &weights);
    let rates = instance.rates(&beamformers, &unc);
    let energy = energy_efficiency(&rates, &beamformers, mask, cfg);
    Ok(Evaluation { beamformers, rates, energy, mask: mask.clone(), allocation })
}
