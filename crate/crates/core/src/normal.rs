//! Standard normal density and distribution function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

#[inline]
pub fn cdf(t: f64) -> f64 {
    // Φ saturates in double precision well inside these bounds.
    if t > 8.5 {
        1.0
    } else if t < -38.5 {
        0.0
    } else {
        0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
    }
}

const HART_NUM: [f64; 7] = [
    3.526_249_659_989_11e-2,
    0.700_383_064_443_688,
    6.373_962_203_531_65,
    33.912_866_078_383,
    112.079_291_497_871,
    221.213_596_169_931,
    220.206_867_912_376,
];
const HART_DEN: [f64; 8] = [
    8.838_834_764_831_84e-2,
    1.755_667_163_182_64,
    16.064_177_579_207,
    86.780_732_202_946_1,
    296.564_248_779_674,
    637.333_633_378_831,
    793.826_512_519_948,
    440.413_735_824_752,
];

#[inline]
fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, v| acc * x + v)
}

/// `(Φ(t), φ(t))` from a single exponential, using Hart's rational
/// approximation of the tail (absolute error below 1e-16).
#[inline]
pub fn cdf_pdf(t: f64) -> (f64, f64) {
    let a = t.abs();
    if a > 38.5 {
        return (if t > 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let e = (-0.5 * a * a).exp();
    let tail = if a < 7.071_067_811_865_47 {
        e * horner(&HART_NUM, a) / horner(&HART_DEN, a)
    } else {
        let b = a + 1.0 / (a + 2.0 / (a + 3.0 / (a + 4.0 / (a + 0.65))));
        e / b * INV_SQRT_2PI
    };
    let pdf = INV_SQRT_2PI * e;
    if t > 0.0 {
        (1.0 - tail, pdf)
    } else {
        (tail, pdf)
    }
}

/// Standard normal tail `1 - Φ(t)` without cancellation.
#[inline]
pub fn sf(t: f64) -> f64 {
    cdf(-t)
}

/// `2Φ(t) − 1`, accurate near zero.
#[inline]
pub fn central(t: f64) -> f64 {
    libm::erf(t * FRAC_1_SQRT_2)
}

#[allow(dead_code)]
pub(crate) fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(cdf(1.96), 0.975_002_104_851_779_5, epsilon = 1e-15);
        assert_relative_eq!(cdf(-3.0), 0.001_349_898_031_630_093_3, max_relative = 1e-14);
        assert_relative_eq!(pdf(0.0) * sqrt_2pi(), 1.0, epsilon = 1e-15);
        assert_eq!(cdf(9.0), 1.0);
        assert_eq!(cdf(-40.0), 0.0);
        for k in 0..=8000 {
            let t = -40.0 + k as f64 * 0.01;
            let (c, p) = cdf_pdf(t);
            assert_relative_eq!(c, cdf(t), max_relative = 1e-14, epsilon = 1e-16);
            assert_relative_eq!(p, pdf(t), max_relative = 1e-15, epsilon = 1e-300);
        }
        assert_relative_eq!(central(1e-9), 2.0 * 1e-9 * pdf(0.0), max_relative = 1e-12);
    }
}
