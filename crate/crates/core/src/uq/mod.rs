//! Moments, X-norm errors and Monte Carlo orchestration.

pub mod moments;
pub mod montecarlo;
pub mod norms;

pub use moments::{estimate_moments, MomentAccumulator, MomentEstimate};
pub use norms::{cross_mesh_error, prolongation, xnorm, XNormParts, XNormWeights};
