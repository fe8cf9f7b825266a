//! Pseudo-spectral Galerkin simulation of the stochastic Cahn-Hilliard-Navier-Stokes
//! system on the 2-D torus, with diagnostics and time-averaged measure estimates.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod init;
pub mod integrator;
pub mod measure;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};
