//! Spectral-Galerkin simulation of slow-fast stochastic 2D Navier–Stokes
//! systems, with an averaging engine and Monte-Carlo diagnostics.

pub mod cli;
pub mod coefficients;
pub mod dynamics;
pub mod harness;
pub mod spectral;
pub mod stochastic;
