//! Standard normal distribution: density, CDF and quantile.
//!
//! The CDF goes through the complementary error function so both tails keep
//! relative precision. The quantile starts from Acklam's rational
//! approximation (relative error about 1.15e-9) and is polished with one
//! Halley step against the CDF, which brings `cdf(quantile(p))` back to `p`
//! within a few ulps across `[1e-300, 1 - 1e-16]`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;

use crate::error::{check_closed_unit, check_finite, check_open_unit, Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        check_closed_unit("probability", value).map(Probability)
    }

    pub fn value(self) -> f64 {
        self.0
    }

}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A finite point on the standard-normal scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ZScore(f64);

impl ZScore {
    pub fn new(value: f64) -> Result<Self> {
        check_finite("z-score", value).map(ZScore)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Φ(x).
pub fn std_normal_cdf(x: f64) -> Result<Probability> {
    check_finite("x", x)?;
    Ok(Probability(cdf(x)))
}

/// Φ⁻¹(p) for `0 < p < 1`.
pub fn std_normal_quantile(p: Probability) -> Result<ZScore> {
    let p = check_open_unit("p", p.value())?;
    Ok(ZScore(quantile(p)))
}

/// φ(x).
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    check_finite("x", x)?;
    Ok(pdf(x))
}

pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub(crate) fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `z_α`, the upper-α critical value `Φ⁻¹(1 − α)`.
pub(crate) fn upper_critical(alpha: f64) -> f64 {
    -quantile(alpha)
}

const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

pub(crate) fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if p > 0.5 {
        // 1 - p is exact here.
        return -quantile(1.0 - p);
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley refinement.
    let e = 0.5 * libm::erfc(-x / SQRT_2) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf via the all-positive series erf(x) = 2/√π e^{-x²} Σ 2ⁿ x^{2n+1} / (1·3···(2n+1)).
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 / PI.sqrt() * (-x * x).exp() * sum
    }

    fn cdf_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / SQRT_2))
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(std_normal_cdf(0.0).unwrap().value(), 0.5);
        let hi = cdf_oracle(1.6449);
        assert!((hi - 0.95).abs() < 1e-4);
        assert!((std_normal_cdf(1.6449).unwrap().value() - hi).abs() < 1e-13);
        let lo = cdf_oracle(-1.2816);
        assert!((lo - 0.10).abs() < 1e-4);
        assert!((std_normal_cdf(-1.2816).unwrap().value() - lo).abs() < 1e-13);
    }

    #[test]
    fn cdf_matches_series_oracle() {
        for i in -60..=60 {
            let x = i as f64 / 10.0;
            assert!((cdf(x) - cdf_oracle(x)).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_pdf(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn quantile_examples() {
        let q = |p: f64| std_normal_quantile(Probability::new(p).unwrap()).unwrap().value();
        assert_eq!(q(0.5), 0.0);
        assert!((q(0.95) - 1.6449).abs() < 1e-4);
        assert!((q(0.80) - 0.8416).abs() < 1e-4);
        // Bisection on the independent CDF oracle.
        for &p in &[0.95, 0.80, 0.9, 0.975, 0.2] {
            let (mut lo, mut hi) = (-8.0, 8.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cdf_oracle(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((q(p) - lo).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn quantile_rejects_boundaries() {
        for p in [0.0, 1.0] {
            assert!(std_normal_quantile(Probability::new(p).unwrap()).is_err());
        }
        assert!(Probability::new(1.5).is_err());
        assert!(Probability::new(-0.1).is_err());
    }

    #[test]
    fn round_trip_grid() {
        let mut p = 1e-6;
        while p < 1.0 - 1e-6 {
            let back = cdf(quantile(p));
            assert!((back - p).abs() <= 1e-10, "p = {p}, back = {back}");
            p += 1e-4;
        }
        for k in 1..=15 {
            let p = 10f64.powi(-k);
            assert!((cdf(quantile(p)) - p).abs() <= 1e-10 * p.max(1e-10));
            assert!((cdf(quantile(1.0 - p)) - (1.0 - p)).abs() <= 1e-10);
        }
    }

    #[test]
    fn cdf_strictly_increasing() {
        let mut prev = cdf(-6.0);
        for i in 1..=10_000 {
            let x = -6.0 + 12.0 * i as f64 / 10_000.0;
            let cur = cdf(x);
            assert!(cur > prev, "x = {x}");
            prev = cur;
        }
    }

    #[test]
    fn pdf_examples() {
        assert!((std_normal_pdf(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((std_normal_pdf(0.5244).unwrap() - 0.3477).abs() < 1e-3);
        assert_eq!(pdf(2.0), pdf(-2.0));
        assert!(pdf(0.0) > pdf(1e-3));
    }

    #[test]
    fn density_integrates_to_cdf_differences() {
        let edges: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let steps = 2000;
            let h = (b - a) / steps as f64;
            let mut acc = 0.5 * (pdf(a) + pdf(b));
            for k in 1..steps {
                acc += pdf(a + k as f64 * h);
            }
            let trap = acc * h;
            assert!((trap - (cdf(b) - cdf(a))).abs() < 1e-6, "[{a}, {b}]");
        }
    }

    #[test]
    fn upper_critical_is_one_minus_alpha_quantile() {
        assert!((upper_critical(0.05) - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!((upper_critical(0.20) - 0.841_621_233_572_914_2).abs() < 1e-12);
        assert!((upper_critical(0.10) - 1.281_551_565_544_600_4).abs() < 1e-12);
    }
}
