//! Distribution utilities: standard normal PDF/CDF/quantile, central
//! chi-square CDF/quantile, and the critical value for the maximum of
//! independent absolute standard normals.
//!
//! Everything here is self-contained: the chi-square CDF goes through the
//! regularized lower incomplete gamma function (series for small arguments,
//! continued fraction for large ones), and quantiles are obtained by
//! safeguarded Newton iteration inside a bracketing interval.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// A probability, guaranteed to lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityValue(f64);

impl ProbabilityValue {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!(
                "probability must lie in [0, 1], got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, valid for x > 0 (only x >= 0.5 is used).
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x >= 0.5);
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..500 {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the standard continued fraction.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut f = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (SQRT_2 * std::f64::consts::PI.sqrt())
}

fn normal_cdf_raw(x: f64) -> f64 {
    // Upper half-tail through Q(1/2, x^2/2); exact symmetry by construction.
    let tail = 0.5 * gamma_q(0.5, 0.5 * x * x);
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> Result<ProbabilityValue> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("normal_cdf requires finite x, got {x}")));
    }
    ProbabilityValue::new(normal_cdf_raw(x).clamp(0.0, 1.0))
}

fn normal_quantile_raw(p: f64) -> f64 {
    // Acklam's rational initial guess, polished with Newton steps on the
    // high-accuracy CDF above.
    let x0 = acklam(p);
    let mut x = x0;
    for _ in 0..3 {
        let err = normal_cdf_raw(x) - p;
        let d = normal_pdf(x);
        if d <= 0.0 {
            break;
        }
        let step = err / d;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal quantile; requires 0 < p < 1.
pub fn normal_quantile(p: ProbabilityValue) -> Result<f64> {
    let p = p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!(
            "normal_quantile requires p in (0, 1), got {p}"
        )));
    }
    Ok(normal_quantile_raw(p))
}

pub(crate) fn normal_quantile_unchecked(p: f64) -> f64 {
    normal_quantile_raw(p)
}

/// Unpolished Acklam quantile (absolute error below 2e-9): fast path for
/// bulk Monte Carlo sampling where Newton refinement would dominate the
/// simulation cost.
pub(crate) fn normal_quantile_fast(p: f64) -> f64 {
    acklam(p)
}

fn chi2_pdf(x: f64, df: u32) -> f64 {
    let a = df as f64 / 2.0;
    if x <= 0.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() - 0.5 * x - a * std::f64::consts::LN_2 - ln_gamma(a)).exp()
}

/// Central chi-square CDF with `df` degrees of freedom.
pub fn chi2_cdf(x: f64, df: u32) -> Result<ProbabilityValue> {
    if df < 1 {
        return Err(Error::Domain("chi2_cdf requires df >= 1".into()));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!(
            "chi2_cdf requires finite x >= 0, got {x}"
        )));
    }
    ProbabilityValue::new(gamma_p(df as f64 / 2.0, 0.5 * x).clamp(0.0, 1.0))
}

pub(crate) fn chi2_cdf_unchecked(x: f64, df: u32) -> f64 {
    gamma_p(df as f64 / 2.0, 0.5 * x)
}

/// Central chi-square quantile; requires 0 < p < 1.
pub fn chi2_quantile(p: ProbabilityValue, df: u32) -> Result<f64> {
    let p = p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!(
            "chi2_quantile requires p in (0, 1), got {p}"
        )));
    }
    if df < 1 {
        return Err(Error::Domain("chi2_quantile requires df >= 1".into()));
    }
    // Wilson-Hilferty starting point, then expand an upper bracket.
    let k = df as f64;
    let z = normal_quantile_raw(p);
    let guess = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    let mut hi = guess.max(1.0);
    while chi2_cdf_unchecked(hi, df) < p {
        hi *= 2.0;
    }
    Ok(invert_increasing(
        |x| chi2_cdf_unchecked(x, df),
        |x| chi2_pdf(x, df),
        p,
        0.0,
        hi,
    ))
}

pub(crate) fn chi2_quantile_unchecked(p: f64, df: u32) -> f64 {
    chi2_quantile(ProbabilityValue::new(p).expect("valid probability"), df)
        .expect("valid quantile arguments")
}

/// 1-alpha-style quantile of max(|X_1|, ..., |X_d|) for X ~ N(0, I_d).
///
/// Closed form: c = Phi^{-1}((1 + p^{1/d}) / 2).
pub fn max_abs_normal_quantile(p: ProbabilityValue, d: u32) -> Result<f64> {
    let p = p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!(
            "max_abs_normal_quantile requires p in (0, 1), got {p}"
        )));
    }
    if d < 1 {
        return Err(Error::Domain("max_abs_normal_quantile requires d >= 1".into()));
    }
    let root = p.powf(1.0 / d as f64);
    Ok(normal_quantile_raw((1.0 + root) / 2.0))
}

pub(crate) fn max_abs_normal_quantile_unchecked(p: f64, d: u32) -> f64 {
    max_abs_normal_quantile(ProbabilityValue::new(p).expect("valid probability"), d)
        .expect("valid arguments")
}

/// Find x in [lo, hi] with f(x) = target for increasing f.
///
/// Bracketed bisection with Newton refinement wherever the Newton step stays
/// inside the current bracket; tolerance 1e-12 on the bracket width.
pub fn invert_increasing(
    f: impl Fn(f64) -> f64,
    deriv: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx.abs() < 1e-15 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo < 1e-12 * (1.0 + x.abs()) {
            return 0.5 * (lo + hi);
        }
        let d = deriv(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}
