//! Link-level blocks for autonomous grant-free non-orthogonal multiple
//! access: spreading-based transmission, Rayleigh fading, blind spatial
//! combining, blind multi-user detection with interference cancellation,
//! perfect-CSI and preamble-assisted baselines, and a Monte-Carlo campaign
//! runner.

pub mod baselines;
pub mod bsc;
pub mod channel;
pub mod error;
pub mod fec;
pub mod linalg;
pub mod mud;
pub mod results;
pub mod runner;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};
