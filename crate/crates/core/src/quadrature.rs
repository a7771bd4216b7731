//! Globally adaptive Gauss–Kronrod (7/15 point) quadrature on finite intervals.

use alloc::vec::Vec;
use libm::fabs;

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: fabs((kronrod - gauss) * half),
    }
}

/// Integrates `f` over `[a, b]`, bisecting the segment with the largest error
/// estimate until the summed estimate is below `max(abs_tol, rel_tol·|I|)`.
///
/// The integrand is never evaluated at the end points, so integrable end
/// point singularities are allowed.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    let mut segments: Vec<Segment> = Vec::with_capacity(64);
    segments.push(gauss_kronrod(&mut f, a, b));
    let mut evaluations = 15;
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature(f64::NAN));
        }
        if error <= abs_tol.max(rel_tol * fabs(value)) {
            return Ok(Integral { value, abs_error: error, evaluations });
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature(error));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.error > acc.1 { (i, s.error) } else { acc });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature(error));
        }
        segments.push(gauss_kronrod(&mut f, seg.a, mid));
        segments.push(gauss_kronrod(&mut f, mid, seg.b));
        evaluations += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{exp, log, sqrt};

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r.value - 0.0).abs() < 1e-13);
        let r = integrate(|x| 5.0 * x * x * x * x, -1.0, 1.0, 1e-14, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularities() {
        let r = integrate(|x| 1.0 / sqrt(x), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        let r = integrate(log, 0.0, 1.0, 1e-11, 0.0).unwrap();
        assert!((r.value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn smooth_exponential() {
        let r = integrate(exp, 0.0, 3.0, 1e-13, 0.0).unwrap();
        assert!((r.value - (exp(3.0) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn non_integrable_fails() {
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, 1e-10, 0.0).is_err());
    }
}
