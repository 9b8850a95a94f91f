//! Minimal switch-off time of an energy device.
//!
//! A device supplies energy along a ramp on `[0, t0]`, holds its peak rate
//! until it is switched off at `t1`, and then decays to zero over a fixed
//! duration `T`. Given a demanded energy `Q`, the crate finds the earliest
//! `t1` for which the total delivered energy still reaches `Q`, using closed
//! forms for the exponential and linear models, an energy-balance solver for
//! arbitrary profiles, a nested solver for general rate families, and a
//! mean-rate reduction for supply lines perturbed by Itô noise.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod numerics;
pub mod profiles;
pub mod solver;
pub mod stochastic;

pub use error::{Error, Result};
