//! Magnetic Weyl asymptotics for Schrödinger operators with non-full-rank
//! magnetic field, together with brute-force spectral oracles.

pub mod asymptotics_lab;
pub mod error;
pub mod field;
pub mod field_geometry;
pub mod landau_counting;
pub mod linalg;
pub mod microhyperbolicity;
pub mod oscillator_algebra;
pub mod quad;
pub mod spectral_oracle;
pub mod weyl_law;

pub use error::{Error, Result};
