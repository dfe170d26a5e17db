//! The manipulation test procedures.
//!
//! MT is the quadratic-form test against a chi-square critical value; MTMAX
//! is the max-statistic variant; BCT runs d separate two-sided z-tests at
//! level alpha/d; DT and SDT collapse the running variables to the signed
//! Euclidean distance from the orthant boundary and test that single
//! variable, without and with prior standardization.

use crate::error::{Error, Result};
use crate::lpdensity::{BandwidthSpec, Kernel};
use crate::marginals::{marginal_stat, Dataset, MarginalStat};
use crate::statdist::{
    chi2_cdf_unchecked, chi2_quantile_unchecked, max_abs_normal_quantile_unchecked, normal_cdf,
    normal_quantile_unchecked,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MT")]
    Mt,
    #[serde(rename = "MTMAX")]
    MtMax,
    #[serde(rename = "BCT")]
    Bct,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "SDT")]
    Sdt,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mt, Method::MtMax, Method::Bct, Method::Dt, Method::Sdt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mt => "MT",
            Method::MtMax => "MTMAX",
            Method::Bct => "BCT",
            Method::Dt => "DT",
            Method::Sdt => "SDT",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MT" => Ok(Method::Mt),
            "MTMAX" => Ok(Method::MtMax),
            "BCT" => Ok(Method::Bct),
            "DT" => Ok(Method::Dt),
            "SDT" => Ok(Method::Sdt),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Outcome of one test procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub critical_value: f64,
    /// For BCT this is the Bonferroni-adjusted minimum p-value.
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub per_variable: Vec<MarginalStat>,
    pub df: Option<usize>,
}

fn validate_inputs(stats: &[MarginalStat], alpha: f64) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::Config("at least one marginal statistic required".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if stats.iter().any(|s| !(s.sigma2_hat > 0.0)) {
        return Err(Error::DegenerateVariance);
    }
    Ok(())
}

fn two_sided_p(z_abs: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z_abs).expect("finite statistic").value())
}

/// Quadratic-form manipulation test: sum of squared standardized statistics
/// against the chi-square d critical value. Rejection uses strict inequality.
pub fn mt_test(stats: &[MarginalStat], alpha: f64) -> Result<TestResult> {
    validate_inputs(stats, alpha)?;
    let d = stats.len();
    let statistic: f64 = stats.iter().map(|s| s.z_score() * s.z_score()).sum();
    let critical_value = chi2_quantile_unchecked(1.0 - alpha, d as u32);
    let p_value = 1.0 - chi2_cdf_unchecked(statistic, d as u32);
    Ok(TestResult {
        method: Method::Mt,
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        alpha,
        per_variable: stats.to_vec(),
        df: Some(d),
    })
}

/// Max-statistic variant: max |z_j| against the quantile of the maximum of
/// d independent absolute standard normals.
pub fn mtmax_test(stats: &[MarginalStat], alpha: f64) -> Result<TestResult> {
    validate_inputs(stats, alpha)?;
    let d = stats.len();
    let statistic = stats
        .iter()
        .map(|s| s.z_score().abs())
        .fold(0.0, f64::max);
    let critical_value = max_abs_normal_quantile_unchecked(1.0 - alpha, d as u32);
    let phi = normal_cdf(statistic).expect("finite statistic").value();
    let p_value = 1.0 - (2.0 * phi - 1.0).max(0.0).powi(d as i32);
    Ok(TestResult {
        method: Method::MtMax,
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        alpha,
        per_variable: stats.to_vec(),
        df: None,
    })
}

/// Bonferroni-corrected separate tests: each variable is tested two-sided at
/// level alpha/d; the family rejects if any variable rejects. The reported
/// p-value is the minimum Bonferroni-adjusted p, capped at 1.
pub fn bct_test(stats: &[MarginalStat], alpha: f64) -> Result<TestResult> {
    validate_inputs(stats, alpha)?;
    let d = stats.len();
    let statistic = stats
        .iter()
        .map(|s| s.z_score().abs())
        .fold(0.0, f64::max);
    let critical_value = normal_quantile_unchecked(1.0 - alpha / (2.0 * d as f64));
    let min_p = stats
        .iter()
        .map(|s| two_sided_p(s.z_score().abs()))
        .fold(f64::INFINITY, f64::min);
    let p_value = (d as f64 * min_p).min(1.0);
    Ok(TestResult {
        method: Method::Bct,
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        alpha,
        per_variable: stats.to_vec(),
        df: None,
    })
}

/// Signed Euclidean distance from a centered observation to the boundary of
/// the nonnegative orthant: positive iff treated.
pub fn signed_distance(row: &[f64]) -> f64 {
    if row.iter().all(|v| *v >= 0.0) {
        row.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        -row.iter()
            .filter(|v| **v < 0.0)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Distance-as-running-variable test: collapse the centered observations to
/// their signed boundary distances (optionally standardizing columns to unit
/// variance first) and run the one-dimensional two-sided z-test at level
/// alpha on the resulting density jump at zero.
pub fn distance_test(
    dataset: &Dataset,
    alpha: f64,
    standardize: bool,
    bw: BandwidthSpec,
    kernel: Kernel,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !dataset.is_centered() {
        return Err(Error::Config("dataset must be centered first".into()));
    }
    let working;
    let source = if standardize {
        let mut factors = Vec::with_capacity(dataset.d());
        for j in 0..dataset.d() {
            let sd = dataset.column_sd(j);
            if !(sd > 0.0) {
                return Err(Error::DegenerateSample);
            }
            factors.push(1.0 / sd);
        }
        working = dataset.scale_columns(&factors)?;
        &working
    } else {
        dataset
    };

    let distances: Vec<f64> = (0..source.n())
        .map(|i| signed_distance(source.row(i)))
        .collect();
    let one_d = Dataset::new_centered(distances, source.n(), 1, vec!["distance".into()])?;
    let stat = marginal_stat(&one_d, 0, bw, kernel)?;
    let z_abs = stat.z_score().abs();
    let critical_value = normal_quantile_unchecked(1.0 - alpha / 2.0);
    Ok(TestResult {
        method: if standardize { Method::Sdt } else { Method::Dt },
        statistic: z_abs,
        critical_value,
        p_value: two_sided_p(z_abs),
        reject: z_abs > critical_value,
        alpha,
        per_variable: vec![stat],
        df: None,
    })
}
