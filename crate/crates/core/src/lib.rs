//! Simulation core for network-assisted full-duplex (NAFD) cell-free mmWave
//! networks with hybrid analog/digital MIMO processing.
//!
//! The crate is organised around the processing chain of such a network:
//!
//! - [`scenario`]: random geometry, path loss, shadowing, unit conversions.
//! - [`channel`]: multipath channel synthesis (ULA steering vectors, per-path
//!   complex gains) and the angle-conditioned spatial covariance matrices.
//! - [`estimation`]: MMSE channel estimation for the inter-AP interference
//!   channel (water-filling coupling design, nearest-Kronecker RF
//!   factorisation) and for the user-AP equivalent channels.
//! - [`beamforming`]: constant-modulus analog beamformers from averaged
//!   covariances, zero-forcing digital precoders/combiners, power accounting.
//! - [`pipeline`]: glue that runs one channel realisation through estimation
//!   and beamforming and collects everything the rate expressions need.
//! - [`rates`]: closed-form bidirectional rate lower bounds plus an
//!   independent Monte Carlo ergodic-rate oracle.
//! - [`sweep`]: the NMSE-vs-SNR measurement harness.
//! - [`madrl`]: multi-agent deterministic policy-gradient learners (MATD3 and
//!   MADDPG) with from-scratch MLPs, Adam, and experience replay, plus the
//!   power-allocation environment and baseline schemes.

pub mod beamforming;
pub mod channel;
pub mod estimation;
pub mod linalg;
pub mod madrl;
pub mod pipeline;
pub mod rates;
pub mod scenario;
pub mod sweep;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry infeasible: {0}")]
    GeometryInfeasible(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("no usable signal direction: all covariance eigenvalues are numerically zero")]
    NoSignalDirection,
    #[error("singular channel: {0}")]
    SingularChannel(String),
    #[error("pilot block too short: {pilots} pilot symbols for {users} users")]
    ContaminationUnsupported { pilots: usize, users: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
