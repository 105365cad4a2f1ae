//! Monte Carlo finite elements for the Stokes-Darcy interface problem with a
//! random hydraulic conductivity, accelerated by a shared-factor low-rank
//! approximation of the sample matrices and Woodbury solves.

pub mod assembly;
pub mod error;
pub mod fem;
pub mod field;
pub mod glram;
pub mod mesh;
pub mod quadrature;
pub mod randfield;
pub mod solver;
pub mod sparse;
pub mod uq;

pub use error::{Error, Result};
