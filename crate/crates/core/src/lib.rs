//! Truncation-free optimal control of Gaussian continuous-variable systems.
//!
//! Krotov pulse optimization acts directly on covariance-matrix dynamics, so no
//! Fock-space cutoff is involved. The crate provides the Gaussian toolbox,
//! closed and open (Lorentzian-bath) propagators, the optimizer, a DCT-based
//! spectral filter and the linearized optomechanical model with its presets.

pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod krotov;
pub mod open_bath;
pub mod optomech;
pub mod spectral;

pub use error::{Error, Result};
