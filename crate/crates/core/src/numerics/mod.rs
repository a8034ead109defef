//! Generic numerical building blocks used by the model solvers.

pub mod optimize;
pub mod quadrature;
pub mod roots;
pub mod spectral;
pub mod spline;
