//! Multi-objective Bayesian tuning of model predictive path-following
//! controllers for automated driving.

pub mod acquisition;
pub mod config;
pub mod controller;
pub mod error;
pub mod gpr;
pub mod optimizer;
pub mod pareto;
pub mod sim;
pub mod track;
pub mod vehicle;

pub use error::{Error, Result};
