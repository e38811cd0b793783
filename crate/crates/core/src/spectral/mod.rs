//! Fourier representation of fields on the periodic square.

mod field;
mod grid;
pub mod snapshot;
mod transport;

pub use field::{Field, VorticityState};
pub use grid::{is_upper_half, Grid, GridSpec, Mode};
pub use transport::{
    biot_savart, nonlinear, nonlinear_adjoint, nonlinear_direct, nonlinear_linearized, norms, project_high,
    project_low, Norms, TransportFrame, VelocityField,
};
pub(crate) use transport::nonlinear_from_frame;
