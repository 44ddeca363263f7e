//! Link functions mapping a linear predictor onto a probability.
//!
//! Each link is a symmetric distribution function `F` together with its
//! density `f` and the density derivative `f'`. Both the zero-inflation and
//! the count component of the model are driven by one of these.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beyond this magnitude the distribution function is returned as exactly 0 or 1.
pub const EXTREME_ETA: f64 = 37.0;

/// 1/sqrt(2*pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Probit,
    Logit,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Probit => "probit",
            LinkKind::Logit => "logit",
        }
    }

    pub fn link(self) -> Link {
        Link::new(self)
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "probit" => Ok(LinkKind::Probit),
            "logit" => Ok(LinkKind::Logit),
            other => Err(Error::UnsupportedLink(other.to_string())),
        }
    }
}

/// The `(F, f, f')` triple for one link kind.
///
/// The checked methods reject non-finite input; the `*_unchecked` variants
/// are used on the hot path where predictors are known to be finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    kind: LinkKind,
}

impl Link {
    pub const PROBIT: Link = Link { kind: LinkKind::Probit };
    pub const LOGIT: Link = Link { kind: LinkKind::Logit };

    pub fn new(kind: LinkKind) -> Self {
        Link { kind }
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    pub fn cdf(&self, eta: f64) -> Result<f64> {
        check_finite(eta)?;
        Ok(self.cdf_unchecked(eta))
    }

    pub fn pdf(&self, eta: f64) -> Result<f64> {
        check_finite(eta)?;
        Ok(self.pdf_unchecked(eta))
    }

    pub fn pdf_prime(&self, eta: f64) -> Result<f64> {
        check_finite(eta)?;
        Ok(self.pdf_prime_unchecked(eta))
    }

    #[inline]
    pub fn cdf_unchecked(&self, eta: f64) -> f64 {
        if eta > EXTREME_ETA {
            return 1.0;
        }
        if eta < -EXTREME_ETA {
            return 0.0;
        }
        match self.kind {
            LinkKind::Probit => 0.5 * libm::erfc(-eta * FRAC_1_SQRT_2),
            LinkKind::Logit => logistic(eta),
        }
    }

    #[inline]
    pub fn pdf_unchecked(&self, eta: f64) -> f64 {
        match self.kind {
            LinkKind::Probit => INV_SQRT_2PI * (-0.5 * eta * eta).exp(),
            LinkKind::Logit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    #[inline]
    pub fn pdf_prime_unchecked(&self, eta: f64) -> f64 {
        match self.kind {
            LinkKind::Probit => -eta * self.pdf_unchecked(eta),
            LinkKind::Logit => {
                // f' = f (1 - 2F) = f * tanh(-eta/2)
                self.pdf_unchecked(eta) * (-0.5 * eta).tanh()
            }
        }
    }

    /// Solves `F(eta) = prob` by bisection on `[-EXTREME_ETA, EXTREME_ETA]`.
    pub fn invert_by_bisection(&self, prob: f64) -> f64 {
        let (mut lo, mut hi) = (-EXTREME_ETA, EXTREME_ETA);
        if prob <= 0.0 {
            return lo;
        }
        if prob >= 1.0 {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_unchecked(mid) < prob {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[inline]
fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn check_finite(eta: f64) -> Result<()> {
    if eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("linear predictor must be finite, got {eta}")))
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(z)` without cancellation.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation followed by two Halley corrections against
/// the erfc-based distribution function, which brings the result to full
/// double precision.
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {prob}")));
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

    let mut x = if prob < P_LOW {
        let q = (-2.0 * prob.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if prob <= 1.0 - P_LOW {
        let q = prob - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - prob).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    for _ in 0..2 {
        // Work on the smaller tail to keep the residual accurate.
        let e = if x <= 0.0 {
            normal_cdf(x) - prob
        } else {
            (1.0 - prob) - normal_sf(x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf by its Maclaurin series, summed until terms vanish.
    fn erf_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = x;
        let mut n = 0u32;
        loop {
            let contrib = term / (2 * n + 1) as f64;
            sum += contrib;
            if contrib.abs() <= 1e-18 * sum.abs() {
                break;
            }
            n += 1;
            term *= -x * x / n as f64;
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn probit_cdf_matches_series_oracle() {
        let oracle = 0.5 * (1.0 + erf_series(1.959964 / 2f64.sqrt()));
        let got = Link::PROBIT.cdf(1.959964).unwrap();
        assert!((got - oracle).abs() < 1e-14, "{got} vs {oracle}");
        assert!((got - 0.975).abs() < 1e-6);
        for &z in &[-3.0, -1.2, -0.3, 0.0, 0.7, 2.5] {
            let oracle = 0.5 * (1.0 + erf_series(z / 2f64.sqrt()));
            assert!((Link::PROBIT.cdf(z).unwrap() - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn origin_values() {
        assert_eq!(Link::PROBIT.cdf(0.0).unwrap(), 0.5);
        assert_eq!(Link::LOGIT.cdf(0.0).unwrap(), 0.5);
        assert!((Link::PROBIT.pdf(0.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-16);
        assert!((Link::PROBIT.pdf(0.0).unwrap() - 0.398_942_3).abs() < 1e-7);
        assert_eq!(Link::LOGIT.pdf(0.0).unwrap(), 0.25);
        assert_eq!(Link::PROBIT.pdf_prime(0.0).unwrap(), 0.0);
        assert_eq!(Link::LOGIT.pdf_prime(0.0).unwrap(), 0.0);
        let expect = -(-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((Link::PROBIT.pdf_prime(1.0).unwrap() - expect).abs() < 1e-15);
        assert!((Link::PROBIT.pdf_prime(1.0).unwrap() + 0.241_970_7).abs() < 1e-7);
        assert_eq!(Link::PROBIT.pdf(6.0).unwrap(), Link::PROBIT.pdf(-6.0).unwrap());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        for link in [Link::PROBIT, Link::LOGIT] {
            assert!(matches!(link.cdf(f64::NAN), Err(Error::Domain(_))));
            assert!(matches!(link.pdf(f64::INFINITY), Err(Error::Domain(_))));
            assert!(matches!(link.pdf_prime(f64::NEG_INFINITY), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn extreme_predictors_short_circuit() {
        for link in [Link::PROBIT, Link::LOGIT] {
            assert_eq!(link.cdf(40.0).unwrap(), 1.0);
            assert_eq!(link.cdf(-40.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn symmetry_and_monotonicity() {
        for link in [Link::PROBIT, Link::LOGIT] {
            let mut prev = 0.0;
            for i in 0..=10_000 {
                let eta = -8.0 + 16.0 * i as f64 / 10_000.0;
                let c = link.cdf(eta).unwrap();
                assert!(c >= prev);
                prev = c;
                assert!((c + link.cdf(-eta).unwrap() - 1.0).abs() < 1e-12);
                assert!(link.pdf(eta).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn probit_density_derivative_identity() {
        for i in 0..=1000 {
            let eta = -8.0 + 16.0 * i as f64 / 1000.0;
            let l = Link::PROBIT;
            assert!((l.pdf_prime(eta).unwrap() + eta * l.pdf(eta).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_match_finite_differences() {
        let h = 1e-5;
        for link in [Link::PROBIT, Link::LOGIT] {
            for i in 0..=10_000 {
                let eta = -8.0 + 16.0 * i as f64 / 10_000.0;
                // Differentiate on the small tail: F(eta) = 1 - F(-eta) for these links,
                // and near 1 the difference quotient would be lost to cancellation.
                let fd = if eta <= 0.0 {
                    (link.cdf_unchecked(eta + h) - link.cdf_unchecked(eta - h)) / (2.0 * h)
                } else {
                    (link.cdf_unchecked(-eta + h) - link.cdf_unchecked(-eta - h)) / (2.0 * h)
                };
                let pdf = link.pdf_unchecked(eta);
                assert!((fd - pdf).abs() / pdf.abs().max(1e-12) < 1e-5, "{link:?} eta={eta}");
                if eta.abs() <= 6.0 {
                    assert!((fd - pdf).abs() / pdf < 1e-6, "{link:?} eta={eta}");
                    let fd2 = (link.pdf_unchecked(eta + h) - link.pdf_unchecked(eta - h)) / (2.0 * h);
                    let d = link.pdf_prime_unchecked(eta);
                    assert!((fd2 - d).abs() / d.abs().max(1e-6) < 1e-6, "{link:?} eta={eta}");
                }
            }
        }
    }

    #[test]
    fn parse_link_names() {
        assert_eq!("probit".parse::<LinkKind>().unwrap(), LinkKind::Probit);
        assert_eq!("Logit".parse::<LinkKind>().unwrap(), LinkKind::Logit);
        assert!(matches!("cloglog".parse::<LinkKind>(), Err(Error::UnsupportedLink(_))));
    }

    #[test]
    fn bisection_inverts_cdf() {
        for link in [Link::PROBIT, Link::LOGIT] {
            for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999] {
                let eta = link.invert_by_bisection(p);
                assert!((link.cdf_unchecked(eta) - p).abs() < 1e-12 * p.max(1e-3) * 1e3);
            }
        }
    }

    #[test]
    fn quantile_inverts_normal_cdf() {
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-13);
        for &p in &[1e-12, 1e-5, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-9] {
            let z = normal_quantile(p).unwrap();
            let back = if z <= 0.0 { normal_cdf(z) } else { 1.0 - normal_sf(z) };
            assert!((back - p).abs() <= 1e-13 * p.min(1.0 - p).max(1e-3), "p={p}");
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
