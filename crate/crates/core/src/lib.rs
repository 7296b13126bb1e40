//! Stable estimation of first-order vector autoregressions.
//!
//! Forward-backward least squares and its reduced-rank variant always return
//! a stable transition matrix, unlike ordinary least squares.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod process;

pub use error::{Error, Result};
pub use estimators::{fit, Estimate, Method};
pub use moments::SampleMoments;
pub use process::{Simulator, Trajectory, VarModel};
