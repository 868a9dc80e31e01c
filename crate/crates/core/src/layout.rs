use rand::Rng;
use serde::Serialize;

use crate::config::SystemConfig;
use crate::rng::{Purpose, TrialStreams};

/// AP and user positions in a `D × D` square with toroidal distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub side: f64,
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
}

impl Layout {
    pub fn new(side: f64, ap_positions: Vec<[f64; 2]>, user_positions: Vec<[f64; 2]>) -> Self {
        Self { side, ap_positions, user_positions }
    }

    /// Wrap-around distance in km between AP `m` and user `k`.
    pub fn distance(&self, m: usize, k: usize) -> f64 {
        wrapped_distance(self.ap_positions[m], self.user_positions[k], self.side)
    }
}

/// Per-axis `min(|Δ|, D − |Δ|)`, equal to the minimum over the nine
/// shifted images of the second point.
pub fn wrapped_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let axis = |x: f64, y: f64| {
        let d = (x - y).abs() % side;
        d.min(side - d)
    };
    axis(a[0], b[0]).hypot(axis(a[1], b[1]))
}

/// APs and users come from separate sub-streams, so the user drop does not
/// change when the number of APs does.
pub fn build_layout(config: &SystemConfig, streams: &TrialStreams) -> Layout {
    let d = config.square_side;
    let point = |rng: &mut rand_chacha::ChaCha8Rng| [rng.gen_range(0.0..d), rng.gen_range(0.0..d)];
    let mut ap_rng = streams.rng_sub(Purpose::Layout, 0);
    let mut user_rng = streams.rng_sub(Purpose::Layout, 1);
    let ap_positions = (0..config.num_aps).map(|_| point(&mut ap_rng)).collect();
    let user_positions = (0..config.num_users).map(|_| point(&mut user_rng)).collect();
    Layout { side: d, ap_positions, user_positions }
}
