//! Brent's bracketing root finder.

use super::{Interval, Tolerance};
use crate::error::{Error, Result};

/// Finds a root of `f` inside `bracket`.
///
/// Stops as soon as `|f(x)| <= abs_tol`, or when the bracket can no longer be
/// narrowed at double precision.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, bracket: Interval, tol: Tolerance) -> Result<f64> {
    try_find_root(|x| Ok(f(x)), bracket, tol)
}

/// [`find_root`] for residuals whose evaluation can itself fail, e.g. a nested
/// quadrature.
pub fn try_find_root<F>(mut f: F, bracket: Interval, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { at: x, value: y })
        }
    };

    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut fa = eval(a)?;
    let mut fb = eval(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NotBracketed {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..tol.max_iterations {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let resolution = 2.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE;
        let half_width = 0.5 * (c - b);
        if fb.abs() <= tol.abs_tol || half_width.abs() <= resolution {
            return Ok(b);
        }

        if e.abs() >= resolution && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when only two points
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * half_width * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * half_width * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * half_width * q - (resolution * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = half_width;
                e = d;
            }
        } else {
            d = half_width;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > resolution {
            d
        } else {
            resolution.copysign(half_width)
        };
        fb = eval(b)?;
    }

    Err(Error::MaxIterationsExceeded {
        max_iterations: tol.max_iterations,
        error_estimate: fb.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn br(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn odd_function_root_at_origin() {
        let x = find_root(|x| x, br(-1.0, 1.0), Tolerance::default()).unwrap();
        assert!(x.abs() <= 1e-10);
    }

    #[test]
    fn square_root_of_two() {
        let x = find_root(|x| x * x - 2.0, br(1.0, 2.0), Tolerance::default()).unwrap();
        assert!((x - 2f64.sqrt()).abs() <= 1e-10);
        assert!((x * x - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn no_sign_change() {
        let err = find_root(|x| x * x + 1.0, br(0.0, 1.0), Tolerance::default()).unwrap_err();
        assert!(matches!(err, Error::NotBracketed { .. }));
    }

    #[test]
    fn endpoint_roots_are_returned() {
        assert_eq!(find_root(|x| x - 1.0, br(1.0, 2.0), Tolerance::default()).unwrap(), 1.0);
        assert_eq!(find_root(|x| x - 2.0, br(1.0, 2.0), Tolerance::default()).unwrap(), 2.0);
    }

    #[test]
    fn steep_function_converges_to_machine_precision() {
        // |f| <= abs_tol is unreachable here; the bracket must collapse instead.
        let x = find_root(|x| 1e12 * (x - 0.7), br(0.0, 1.0), Tolerance::default()).unwrap();
        assert!((x - 0.7).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn iteration_budget() {
        let tol = Tolerance::new(1e-300, 0.0, 2).unwrap();
        let err = find_root(|x: f64| x.powi(3) - 0.123, br(0.0, 10.0), tol).unwrap_err();
        assert!(matches!(err, Error::MaxIterationsExceeded { .. }));
    }

    #[test]
    fn failing_residual_propagates() {
        let err = try_find_root(
            |x| if x > 0.5 { Err(Error::InvalidParams("boom".into())) } else { Ok(x - 1.0) },
            br(0.0, 1.0),
            Tolerance::default(),
        )
        .unwrap_err();
        assert_eq!(err.kind(), "InvalidParams");
    }
}
