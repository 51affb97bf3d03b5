//! Simulation and verification toolkit for slow-fast stochastic
//! differential equations and their averaged dynamics.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod constants;
pub mod decoupling;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
