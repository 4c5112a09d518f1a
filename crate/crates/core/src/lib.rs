//! Numerical Hecke operators for the wildly ramified Gaudin model on the projective line.

pub mod autodiff;
pub mod collision;
pub mod error;
pub mod gaudin;
pub mod group;
pub mod hecke;
pub mod jet;
pub mod moduli;
pub mod operator;
pub mod quadrature;
pub mod spectral;
pub mod suites;
pub mod symbolic;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
