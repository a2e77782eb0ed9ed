//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

// Published node and weight tables, kept at their full printed precision.
#![allow(clippy::excessive_precision)]

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
// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of one quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, &x) in XGK[..7].iter().enumerate() {
        let f1 = f(c - hw * x);
        let f2 = f(c + hw * x);
        kron += WGK[k] * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    (kron * hw, ((kron - gauss) * hw).abs())
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error, evaluations });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: error {error:e} for value {value:e}"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval can no longer be split in floating point
            return Ok(Quadrature { value, error, evaluations });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        evaluations += 30;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((q.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn smooth_and_peaked() {
        let q = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12, 0.0).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
        let q = integrate(|x| (-1e4 * x * x).exp(), -1.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((q.value - std::f64::consts::PI.sqrt() / 100.0).abs() < 1e-14);
    }

    #[test]
    fn reversed_interval_and_empty() {
        let q = integrate(|x| x, 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((q.value + 0.5).abs() < 1e-14);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-12, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-10, 0.0).is_err());
    }
}
