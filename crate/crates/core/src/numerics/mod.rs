//! Deterministic numerical kernels: adaptive quadrature, bracketing root
//! finding and a seedable stream of standard-normal deviates.
//!
//! These are the oracles every closed form in the crate is checked against,
//! so they carry no knowledge of the supply profiles themselves.

mod quad;
mod rng;
mod root;

pub use quad::{integrate, integrate_with_breakpoints, Quadrature};
pub use rng::{normal_deviates, NormalStream};
pub use root::{find_root, try_find_root};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParams(format!(
                "interval bounds must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(Error::InvalidParams(format!(
                "interval lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Convergence controls for quadrature and root finding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iterations: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "abs_tol must be positive and finite, got {abs_tol}"
            )));
        }
        if !(rel_tol >= 0.0 && rel_tol.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "rel_tol must be non-negative and finite, got {rel_tol}"
            )));
        }
        if max_iterations == 0 {
            return Err(Error::InvalidParams(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(Tolerance {
            abs_tol,
            rel_tol,
            max_iterations,
        })
    }

    /// Error budget for a result of magnitude `value`.
    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rejects_reversed_and_non_finite() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        let i = Interval::new(2.0, 2.0).unwrap();
        assert_eq!(i.width(), 0.0);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 0.0, 10).is_err());
        assert!(Tolerance::new(1e-8, -1.0, 10).is_err());
        assert!(Tolerance::new(1e-8, 0.0, 0).is_err());
        let d = Tolerance::default();
        assert_eq!(d.abs_tol, 1e-10);
        assert_eq!(d.rel_tol, 1e-10);
        assert_eq!(d.max_iterations, 10_000);
        assert!((d.target(1e3) - 1e-7).abs() < 1e-20);
        assert_eq!(d.target(0.5), 1e-10);
    }
}
