//! Equilibria of quadratic cheap-talk and Gaussian signaling games with
//! biased encoder objectives.
//!
//! The scalar and product quantizer solvers live in [`cheap_talk_scalar`] and
//! [`cheap_talk_multi`]; affine equilibria of the noisy games in
//! [`signaling_scalar`] and [`signaling_multi`]. [`montecarlo`] estimates
//! costs by simulation and certifies equilibria against unilateral deviations.

pub mod cheap_talk_multi;
pub mod cheap_talk_scalar;
pub mod distributions;
pub mod error;
pub mod montecarlo;
pub mod report;
pub mod scenario;
pub mod signaling_multi;
pub mod signaling_scalar;

pub use distributions::SourceModel;
pub use error::{Error, Result};
pub use report::{Costs, Diagnostics, EquilibriumClass, EquilibriumReport, Policy, Solution};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
