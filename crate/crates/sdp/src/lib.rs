//! Dense numerical kernel for small block SDPs.
//!
//! - [`HermitianBlock`]: packed Hermitian storage.
//! - [`eigh`]: cyclic Jacobi eigendecomposition (ascending eigenvalues).
//! - [`nearest_psd`]: eigenvalue clipping.
//! - [`barrier_feasibility`]: log-det barrier phase-I for `X_b ⪰ 0` blocks
//!   coupled by Hermitian linear inequalities.

pub mod barrier;
pub mod eigh;
pub mod hermitian;
pub mod psd;

pub use barrier::{barrier_feasibility, Assignment, BarrierOptions, FeasibilityProblem, LinearForm, Verdict};
pub use eigh::{eigh, eigh_dense, eigh_real, Eigh};
pub use hermitian::{hpd_cholesky, CMat, HermitianBlock, C64};
pub use psd::{min_eigenvalue, nearest_psd};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("coefficient is not Hermitian (‖A − A^H‖_F = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is {rows}×{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("block index {index} out of range ({blocks} blocks)")]
    BlockIndex { index: usize, blocks: usize },
    #[error("block {block} has dimension {expected}, coefficient has {found}")]
    DimensionMismatch { block: usize, expected: usize, found: usize },
    #[error("non-finite coefficient")]
    NonFinite,
}
