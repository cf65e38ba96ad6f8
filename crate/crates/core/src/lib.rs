//! Numerical checks of semiclassical Moser-Trudinger bounds for densities of
//! orthonormal-gradient families.

pub mod cutoff;
pub mod density;
pub mod error;
pub mod family;
pub mod fractional;
pub mod geometry;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod schrodinger;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
