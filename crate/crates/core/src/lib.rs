//! Latent ODE sequence models for irregularly sampled time series.
//!
//! The crate is organized bottom-up: [`numcore`] holds the dense linear
//! algebra, [`odesolve`] the fixed-step and adaptive Runge–Kutta solvers,
//! [`cells`] the recurrent cells and their ODE-driven encoders, [`latent`]
//! the variational model, [`train`] losses, optimization and gradient
//! diagnostics, and [`data`] dataset construction.

pub mod cells;
pub mod data;
mod error;
pub mod latent;
pub mod nn;
pub mod numcore;
pub mod odesolve;
pub mod params;
pub mod train;

pub use error::{Error, Result};
