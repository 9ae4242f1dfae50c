//! Space-time fractional diffusion on `(-1, 1)`: forward L1/P1 solver,
//! spectral reference solutions and Tikhonov reconstruction of the initial
//! value by the conjugate gradient method.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod inverse;
pub mod quadrature;
pub mod special_functions;
pub mod spectral;
pub mod time_stepper;

pub use error::{Error, Result};
