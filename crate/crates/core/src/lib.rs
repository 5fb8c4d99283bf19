//! Allen-Cahn critical points on periodic tori, their linearized spectra,
//! inner variations, diffuse varifold measures and the Jacobi spectra of
//! the limit interfaces.

pub mod dense;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod linalg;
pub mod potential;
pub mod solver;
pub mod spectrum;
pub mod variation;
pub mod varifold;

pub use error::{Error, Result};
