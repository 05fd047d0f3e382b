//! Experiment runner for covariance-matrix Krotov control: layered TOML
//! configuration, the `optimize` / `propagate` / `scan` / `spectrum` drivers
//! and their CSV and JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod scan;

pub use error::{CliError, CliResult};
