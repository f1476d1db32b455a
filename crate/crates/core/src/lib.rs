//! Packet- and flow-level analysis of multi-channel CSMA networks.
//!
//! The analytic modules ([`schedule`], [`equilibrium`], [`capacity`],
//! [`stability`]) are generic over a [`Scalar`] (`f32` or `f64`); exact
//! infinite-attempt-rate limits use big rationals. Simulation runs in
//! `f64`. The aliases below fix the scalar to `f64`.

pub mod capacity;
pub mod ctmc;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod library;
pub mod scalar;
pub mod scenario;
pub mod schedule;
pub mod stability;
pub mod topology;

pub use equilibrium::{EquilibriumResult, Policy};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use schedule::{NetworkState, Schedule};
pub use topology::{CsmaParams, NetworkSpec, TrafficSpec};

pub type Params = topology::CsmaParams<f64>;
pub type Traffic = topology::TrafficSpec<f64>;
pub type Equilibrium = equilibrium::EquilibriumResult<f64>;
pub type Verdict = capacity::CapacityVerdict<f64>;
pub type Drift = stability::DriftReport<f64>;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
