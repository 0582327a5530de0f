//! Bayesian logistic regression on the concentric-spheres problem.
//!
//! Companion crate to a benchmark of inference methods under adversarial
//! evaluation: datasets of points on two concentric spheres, a quadratic
//! feature map, five posterior approximations (point estimates, bootstrap,
//! slice-sampling MCMC, Laplace, stochastic variational inference), an
//! on-sphere projected-gradient attack, and a reproducible benchmark
//! harness with CSV outputs.

pub mod attack;
pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gaussian;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod numcheck;
pub mod optim;
pub mod point;

pub use cli::cli_main;
pub use error::{Error, Result};
