//! Pseudo-spectral simulation of the stochastically forced 2D Navier–Stokes
//! equation in vorticity form, with tangent-flow, Malliavin-matrix and
//! turbulence diagnostics.

pub mod diagnostics;
pub mod error;
pub mod forcing;
pub mod integrator;
pub mod malliavin;
pub mod spectral;
pub mod stats;
pub mod tangent;

pub use error::{Error, Result};
