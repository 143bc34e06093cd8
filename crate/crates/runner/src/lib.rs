//! Configuration, ensemble orchestration and refinement studies for the stochastic
//! Navier–Stokes–Fourier scheme in `nsf-core`.

pub mod config;
pub mod converge;
pub mod ensemble;

pub use config::RunConfig;
