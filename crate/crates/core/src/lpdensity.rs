//! Boundary-adaptive local polynomial density estimation.
//!
//! The density is estimated as the first-derivative coefficient of a local
//! polynomial fit of the empirical CDF. Fits of order p with p - 1 odd are
//! boundary adaptive: no explicit correction is applied at support endpoints.
//! The module also provides the plug-in variance estimator for the density
//! coefficient and an MSE-optimal plug-in bandwidth rule with a
//! normal-reference pilot.

use crate::error::{Error, Result};
use crate::numeric::{integrate, Cholesky};
use serde::{Deserialize, Serialize};

/// Symmetric kernels with support [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Triangular,
    Uniform,
    Epanechnikov,
}

impl Kernel {
    pub fn evaluate(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Triangular => 1.0 - u.abs(),
            Kernel::Uniform => 0.5,
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Triangular => "triangular",
            Kernel::Uniform => "uniform",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" => Ok(Kernel::Triangular),
            "uniform" => Ok(Kernel::Uniform),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// A sorted univariate sample with (possibly unbounded) support limits.
#[derive(Debug, Clone)]
pub struct Sample {
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_support(values, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn with_support(mut values: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("sample must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sample contains non-finite values".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        if lower >= upper || values[0] < lower || values[values.len() - 1] > upper {
            return Err(Error::Domain("sample support does not contain the data".into()));
        }
        Ok(Self { values, lower, upper })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Empirical CDF with the <= convention, right-continuous.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v <= x) as f64 / self.len() as f64
    }

    /// Index range [start, end) of observations with |z - x| <= h.
    fn window(&self, x: f64, h: f64) -> (usize, usize) {
        let start = self.values.partition_point(|v| *v < x - h);
        let end = self.values.partition_point(|v| *v <= x + h);
        (start, end)
    }

    pub fn count_in_window(&self, x: f64, h: f64) -> usize {
        let (s, e) = self.window(x, h);
        e - s
    }
}

/// The empirical distribution function of `sample` evaluated at `x`.
pub fn empirical_cdf(sample: &Sample, x: f64) -> f64 {
    sample.ecdf(x)
}

/// One local polynomial fit of the empirical CDF at a point.
#[derive(Debug, Clone)]
pub struct LocalPolyFit {
    pub point: f64,
    pub order: usize,
    pub bandwidth: f64,
    /// Coefficients in the unscaled monomial basis (z - point)^k.
    pub coefficients: Vec<f64>,
    /// First-derivative coefficient: the density estimate.
    pub density: f64,
    /// Observations with |z - point| <= bandwidth.
    pub n_local: usize,
}

/// Weighted least-squares fit of the empirical CDF on the local polynomial
/// basis; the density estimate is the linear coefficient.
pub fn fit_local_poly(
    sample: &Sample,
    x: f64,
    h: f64,
    p: usize,
    kernel: Kernel,
) -> Result<LocalPolyFit> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    if p < 1 {
        return Err(Error::Domain("polynomial order must be at least 1".into()));
    }
    let (start, end) = sample.window(x, h);
    let n_local = end - start;
    if n_local < p + 2 {
        return Err(Error::InsufficientLocalData {
            needed: p + 2,
            found: n_local,
        });
    }

    // Accumulate the normal equations in the scaled basis u = (z - x) / h.
    let dim = p + 1;
    let mut s = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut pow = vec![0.0; 2 * p + 1];
    for i in start..end {
        let z = sample.values[i];
        let u = (z - x) / h;
        let w = kernel.evaluate(u);
        if w == 0.0 {
            continue;
        }
        let y = sample.ecdf(z);
        pow[0] = 1.0;
        for k in 1..=2 * p {
            pow[k] = pow[k - 1] * u;
        }
        for l in 0..dim {
            for m in 0..dim {
                s[l * dim + m] += w * pow[l + m];
            }
            rhs[l] += w * pow[l] * y;
        }
    }

    let chol = Cholesky::new(dim, &s)?;
    let beta_scaled = chol.solve(&rhs);
    let mut coefficients = Vec::with_capacity(dim);
    let mut hk = 1.0;
    for k in 0..dim {
        coefficients.push(beta_scaled[k] / hk);
        hk *= h;
    }
    let density = coefficients[1];
    Ok(LocalPolyFit {
        point: x,
        order: p,
        bandwidth: h,
        coefficients,
        density,
        n_local,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    FastIdentity,
    NaiveTripleSum,
}

#[derive(Debug, Clone, Copy)]
pub struct VarianceEstimate {
    /// V-hat for the density coefficient, in the scaled basis.
    pub value: f64,
    pub method: VarianceMethod,
}

/// Plug-in variance estimator V-hat = e1' A^-1 C A^-1 e1 for the density
/// coefficient of a local fit of order `p` at `x`.
///
/// The fast path collapses the inner sum over the whole sample via
/// sum_i [1{x_i <= x_j} - F(x_j)][1{x_i <= x_k} - F(x_k)]
///   = n (F(min(x_j, x_k)) - F(x_j) F(x_k)),
/// which reduces the cost from O(n^3) to O(m^2) over the m window points.
pub fn variance_hat(
    sample: &Sample,
    x: f64,
    h: f64,
    p: usize,
    kernel: Kernel,
    method: VarianceMethod,
) -> Result<VarianceEstimate> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    let (start, end) = sample.window(x, h);
    let m = end - start;
    if m < p + 2 {
        return Err(Error::InsufficientLocalData {
            needed: p + 2,
            found: m,
        });
    }
    let n = sample.len() as f64;
    let dim = p + 1;

    // Window point data: scaled regressor powers, weight, ECDF value.
    let mut pts = Vec::with_capacity(m);
    for i in start..end {
        let z = sample.values[i];
        let u = (z - x) / h;
        let w = kernel.evaluate(u);
        let mut r = Vec::with_capacity(dim);
        let mut uk = 1.0;
        for _ in 0..dim {
            r.push(uk);
            uk *= u;
        }
        pts.push((r, w, sample.ecdf(z), z));
    }

    let mut a = vec![0.0; dim * dim];
    for (r, w, _, _) in &pts {
        for l in 0..dim {
            for mm in 0..dim {
                a[l * dim + mm] += w * r[l] * r[mm];
            }
        }
    }
    for v in a.iter_mut() {
        *v /= n * h;
    }

    let mut c = vec![0.0; dim * dim];
    match method {
        VarianceMethod::FastIdentity => {
            for (rj, wj, fj, _) in &pts {
                if *wj == 0.0 {
                    continue;
                }
                for (rk, wk, fk, _) in &pts {
                    if *wk == 0.0 {
                        continue;
                    }
                    // ECDF is monotone, so F(min(z_j, z_k)) = min(F_j, F_k).
                    let inner = n * (fj.min(*fk) - fj * fk);
                    let scale = wj * wk * inner;
                    for l in 0..dim {
                        for mm in 0..dim {
                            c[l * dim + mm] += scale * rj[l] * rk[mm];
                        }
                    }
                }
            }
        }
        VarianceMethod::NaiveTripleSum => {
            for (rj, wj, fj, zj) in &pts {
                if *wj == 0.0 {
                    continue;
                }
                for (rk, wk, fk, zk) in &pts {
                    if *wk == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for zi in sample.values() {
                        let dj = if *zi <= *zj { 1.0 - fj } else { -fj };
                        let dk = if *zi <= *zk { 1.0 - fk } else { -fk };
                        inner += dj * dk;
                    }
                    let scale = wj * wk * inner;
                    for l in 0..dim {
                        for mm in 0..dim {
                            c[l * dim + mm] += scale * rj[l] * rk[mm];
                        }
                    }
                }
            }
        }
    }
    let c_norm = n * n * n * h * h * h;
    for v in c.iter_mut() {
        *v /= c_norm;
    }

    let chol = Cholesky::new(dim, &a)?;
    let mut e1 = vec![0.0; dim];
    e1[1] = 1.0;
    let w = chol.solve(&e1);
    let mut value = 0.0;
    for l in 0..dim {
        for mm in 0..dim {
            value += w[l] * c[l * dim + mm] * w[mm];
        }
    }
    Ok(VarianceEstimate {
        value: value.max(0.0),
        method,
    })
}

/// Probabilists' Hermite polynomial He_k(t).
fn hermite(k: usize, t: f64) -> f64 {
    let mut h0 = 1.0;
    if k == 0 {
        return h0;
    }
    let mut h1 = t;
    for m in 1..k {
        let h2 = t * h1 - m as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn normal_ref_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Derivative of order `m` of the normal-reference CDF at `x`.
fn normal_ref_cdf_derivative(m: usize, mean: f64, sd: f64, x: f64) -> f64 {
    debug_assert!(m >= 1);
    let t = (x - mean) / sd;
    let sign = if (m - 1) % 2 == 0 { 1.0 } else { -1.0 };
    sign * hermite(m - 1, t) * normal_ref_pdf(t) / sd.powi(m as i32)
}

fn kernel_window_limits(x: f64, h: f64, support: (f64, f64)) -> Result<(f64, f64)> {
    let lo = ((support.0 - x) / h).max(-1.0);
    let hi = ((support.1 - x) / h).min(1.0);
    if !(lo < hi) {
        return Err(Error::Domain(
            "evaluation point leaves no kernel mass inside the support".into(),
        ));
    }
    Ok((lo, hi))
}

/// Kernel moment matrix entries over [lo, hi], solved against the target
/// vector; shared by the bias and variance reference calculations.
fn moment_matrix(p: usize, kernel: Kernel, lo: f64, hi: f64) -> Result<Cholesky> {
    let dim = p + 1;
    let mut a = vec![0.0; dim * dim];
    for l in 0..dim {
        for m in 0..dim {
            a[l * dim + m] = integrate(|u| u.powi((l + m) as i32) * kernel.evaluate(u), lo, hi);
        }
    }
    Cholesky::new(dim, &a)
}

/// Plug-in asymptotic bias B(x) = e1' A(x)^-1 a(x) under a normal reference
/// with the given pilot mean and standard deviation.
///
/// The reference density cancels between A and a, so B reduces to the
/// (p+1)-th CDF derivative times a pure kernel-moment term. The integration
/// limits are the kernel window clipped to the support.
pub fn bias_components(
    pilot_mean: f64,
    pilot_sd: f64,
    x: f64,
    h: f64,
    p: usize,
    kernel: Kernel,
    support: (f64, f64),
) -> Result<f64> {
    if !(pilot_sd > 0.0) {
        return Err(Error::Domain("pilot standard deviation must be positive".into()));
    }
    let (lo, hi) = kernel_window_limits(x, h, support)?;
    let dim = p + 1;
    let chol = moment_matrix(p, kernel, lo, hi)?;
    let mut a_vec = vec![0.0; dim];
    for l in 0..dim {
        a_vec[l] = integrate(
            |u| u.powi((p + 1 + l) as i32) * kernel.evaluate(u),
            lo,
            hi,
        );
    }
    let v = chol.solve(&a_vec);
    let c = normal_ref_cdf_derivative(p + 1, pilot_mean, pilot_sd, x) / factorial(p + 1);
    Ok(c * v[1])
}

/// Asymptotic variance V(x) = e1' A^-1 C A^-1 e1 under the normal reference:
/// the reference density enters linearly once the kernel moments are fixed.
pub fn variance_reference(
    pilot_mean: f64,
    pilot_sd: f64,
    x: f64,
    h: f64,
    p: usize,
    kernel: Kernel,
    support: (f64, f64),
) -> Result<f64> {
    if !(pilot_sd > 0.0) {
        return Err(Error::Domain("pilot standard deviation must be positive".into()));
    }
    let (lo, hi) = kernel_window_limits(x, h, support)?;
    let dim = p + 1;
    let chol = moment_matrix(p, kernel, lo, hi)?;
    let mut e1 = vec![0.0; dim];
    e1[1] = 1.0;
    let w = chol.solve(&e1);
    // C_lm = int int min(u, v) u^l v^m K(u) K(v); min splits the inner range.
    let mut quad = 0.0;
    for l in 0..dim {
        for m in 0..dim {
            let entry = integrate(
                |v| {
                    let kv = kernel.evaluate(v);
                    if kv == 0.0 {
                        return 0.0;
                    }
                    let below = integrate(|u| u.powi(l as i32 + 1) * kernel.evaluate(u), lo, v);
                    let above = v * integrate(|u| u.powi(l as i32) * kernel.evaluate(u), v, hi);
                    v.powi(m as i32) * kv * (below + above)
                },
                lo,
                hi,
            );
            quad += w[l] * entry * w[m];
        }
    }
    let t = (x - pilot_mean) / pilot_sd;
    let f_ref = normal_ref_pdf(t) / pilot_sd;
    Ok(f_ref * quad)
}

/// Bandwidth selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSpec {
    AutoPlugin,
    Fixed(f64),
}

const MIN_AUTO_SAMPLE: usize = 10;
const BANDWIDTH_FLOOR_FACTOR: f64 = 0.1;

/// MSE-optimal plug-in bandwidth with a normal-reference pilot:
/// h = [ V_ref / (2 p B_ref^2 n) ]^{1/(2p+1)}, clamped to
/// [0.1 sd n^{-1/(2p+1)}, sample range]. Fixed mode is a passthrough.
pub fn select_bandwidth(
    sample: &Sample,
    x: f64,
    p: usize,
    kernel: Kernel,
    spec: BandwidthSpec,
) -> Result<f64> {
    match spec {
        BandwidthSpec::Fixed(h) => {
            if h > 0.0 && h.is_finite() {
                Ok(h)
            } else {
                Err(Error::Config(format!("fixed bandwidth must be positive, got {h}")))
            }
        }
        BandwidthSpec::AutoPlugin => {
            let n = sample.len();
            if n < MIN_AUTO_SAMPLE {
                return Err(Error::InsufficientLocalData {
                    needed: MIN_AUTO_SAMPLE,
                    found: n,
                });
            }
            let sd = sample.sd();
            if !(sd > 0.0) {
                return Err(Error::DegenerateSample);
            }
            let mean = sample.mean();
            let exponent = 1.0 / (2.0 * p as f64 + 1.0);
            let h_pilot = sd * (n as f64).powf(-exponent);
            let b_ref = bias_components(mean, sd, x, h_pilot, p, kernel, sample.support())?;
            let v_ref = variance_reference(mean, sd, x, h_pilot, p, kernel, sample.support())?;
            let denom = 2.0 * p as f64 * b_ref * b_ref * n as f64;
            let h_raw = if denom > f64::MIN_POSITIVE && v_ref > 0.0 {
                (v_ref / denom).powf(exponent)
            } else {
                f64::INFINITY
            };
            let floor = BANDWIDTH_FLOOR_FACTOR * sd * (n as f64).powf(-exponent);
            let ceiling = (sample.max() - sample.min()).max(floor);
            Ok(h_raw.clamp(floor, ceiling))
        }
    }
}

pub const WIDEN_FACTOR: f64 = 1.5;
pub const MAX_WIDENINGS: usize = 10;

/// Widen `h0` geometrically until at least `min_local` observations fall in
/// the kernel window at `x`.
pub fn widen_until_feasible(sample: &Sample, x: f64, h0: f64, min_local: usize) -> Result<f64> {
    let mut h = h0;
    for _ in 0..=MAX_WIDENINGS {
        if sample.count_in_window(x, h) >= min_local {
            return Ok(h);
        }
        h *= WIDEN_FACTOR;
    }
    Err(Error::InsufficientLocalData {
        needed: min_local,
        found: sample.count_in_window(x, h0 * WIDEN_FACTOR.powi(MAX_WIDENINGS as i32)),
    })
}
