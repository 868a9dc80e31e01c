//! Deterministic random streams.
//!
//! One root seed keys a ChaCha8 generator; every (purpose, trial) pair reads
//! its own ChaCha stream id. Results therefore do not depend on how trials
//! are scheduled, and turning one randomness source off leaves the others
//! untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Layout = 1,
    Angles = 2,
    Shadowing = 3,
    SmallScale = 4,
    PilotNoise = 5,
    Reciprocity = 6,
    DownlinkSmallScale = 7,
    Genie = 8,
    Oracle = 9,
    Auxiliary = 10,
}

/// Random streams for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    pub seed: u64,
    pub trial: u64,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        Self { seed, trial }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        self.rng_sub(purpose, 0)
    }

    /// Separate stream for a sub-index (e.g. one per SNR point).
    pub fn rng_sub(&self, purpose: Purpose, sub: u16) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // 8 bits purpose | 16 bits sub-index | 40 bits trial
        let id = ((purpose as u64) << 56) | ((sub as u64) << 40) | (self.trial & ((1u64 << 40) - 1));
        rng.set_stream(id);
        rng
    }
}

/// Circularly-symmetric complex Gaussian with E|z|² = `var`.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}
