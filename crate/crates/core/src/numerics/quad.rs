//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Interval, Tolerance};
use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of a quadrature: the integral and an estimate of its absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn checked<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFinite { at: x, value: y })
    }
}

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Result<Segment> {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let f_centre = checked(f, centre)?;
    let mut kronrod = f_centre * WGK[7];
    let mut gauss = f_centre * WG[3];
    let mut res_abs = kronrod.abs();
    let mut f_left = [0.0; 7];
    let mut f_right = [0.0; 7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let fl = checked(f, centre - dx)?;
        let fr = checked(f, centre + dx)?;
        f_left[j] = fl;
        f_right[j] = fr;
        kronrod += WGK[j] * (fl + fr);
        res_abs += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (fl + fr);
        }
    }

    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (f_centre - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((f_left[j] - mean).abs() + (f_right[j] - mean).abs());
    }

    let value = kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }

    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}

/// Integrates `f` over `domain` to `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, domain: Interval, tol: Tolerance) -> Result<Quadrature> {
    integrate_with_breakpoints(f, domain, &[], tol)
}

/// Like [`integrate`], but the domain is first split at every breakpoint that
/// lies strictly inside it, so that no panel straddles a known kink.
pub fn integrate_with_breakpoints<F: FnMut(f64) -> f64>(
    mut f: F,
    domain: Interval,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Quadrature> {
    if domain.width() == 0.0 {
        return Ok(Quadrature {
            value: 0.0,
            error_estimate: 0.0,
        });
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x.is_finite() && x > domain.lo && x < domain.hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(domain.lo);
    edges.extend(cuts);
    edges.push(domain.hi);

    let mut heap = BinaryHeap::new();
    // Panels too narrow to split further; their error is final.
    let mut settled_value = 0.0;
    let mut settled_error = 0.0;
    for w in edges.windows(2) {
        heap.push(kronrod_panel(&mut f, w[0], w[1])?);
    }

    let mut splits = 0usize;
    loop {
        let (value, error) = heap
            .iter()
            .fold((settled_value, settled_error), |(v, e), s| (v + s.value, e + s.error));
        if error <= tol.target(value) {
            return Ok(Quadrature {
                value,
                error_estimate: error,
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => {
                // Nothing left to refine: accuracy is limited by rounding.
                return Err(Error::MaxIterationsExceeded {
                    max_iterations: splits,
                    error_estimate: error,
                });
            }
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi)
            || (worst.hi - worst.lo) <= 4.0 * f64::EPSILON * mid.abs().max(1.0)
        {
            settled_value += worst.value;
            settled_error += worst.error;
            continue;
        }
        splits += 1;
        if splits > tol.max_iterations {
            return Err(Error::MaxIterationsExceeded {
                max_iterations: tol.max_iterations,
                error_estimate: error,
            });
        }
        heap.push(kronrod_panel(&mut f, worst.lo, mid)?);
        heap.push(kronrod_panel(&mut f, mid, worst.hi)?);
    }
}
