//! Coupled-mode model of a nonlinear resonator whose mode 1 is parametrically
//! pumped at a combination frequency with a lossy mode 2.

// `!(x > 0.0)` guards deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod linearize;
pub mod ode;
pub mod params;
pub mod response;
pub mod selfsustained;
pub mod timedomain;

pub use error::{ModelError, Result};
