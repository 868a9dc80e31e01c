//! Cell-free massive MIMO with multipath-component channel reconstruction.
//!
//! Gains are expressed relative to the no-shadowing path loss at half the
//! square side, so `noise_var` and the pilot/data powers share one scale.

pub mod allocation;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod estimation;
pub mod layout;
pub mod linalg;
pub mod performance;
pub mod rng;
pub mod scenario;
pub mod training;

pub use config::{AngleAveraging, SystemConfig};

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Sdp(#[from] sdp_kernel::SdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
