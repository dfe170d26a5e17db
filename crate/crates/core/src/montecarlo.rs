//! Data generating processes and simulation harnesses: size/power studies
//! over Models 1-4 and local asymptotic power curves.
//!
//! Determinism contract: each replication draws from its own ChaCha8 stream
//! keyed by a splitmix64 hash of (seed, replication index), and results are
//! aggregated as integer counts, so output is identical under any degree of
//! parallelism.

use crate::error::{Error, Result};
use crate::lpdensity::{BandwidthSpec, Kernel};
use crate::manipulation::{bct_test, distance_test, mt_test, mtmax_test, Method};
use crate::marginals::{all_marginal_stats, Dataset};
use crate::statdist::{
    chi2_quantile_unchecked, max_abs_normal_quantile_unchecked, normal_quantile_fast,
    normal_quantile_unchecked,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Model1 { d: usize },
    Model2 { d: usize },
    Model3 { gamma1: f64 },
    Model4 { gamma2: f64 },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Model1 { d } | ModelSpec::Model2 { d } => {
                if d < 1 {
                    return Err(Error::Config("model dimension must be at least 1".into()));
                }
            }
            ModelSpec::Model3 { gamma1 } => {
                if !(0.0..=1.0).contains(&gamma1) {
                    return Err(Error::Config(format!(
                        "gamma1 must lie in [0, 1], got {gamma1}"
                    )));
                }
            }
            ModelSpec::Model4 { gamma2 } => {
                if !(0.0..=1.0).contains(&gamma2) {
                    return Err(Error::Config(format!(
                        "gamma2 must lie in [0, 1], got {gamma2}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        match *self {
            ModelSpec::Model1 { d } | ModelSpec::Model2 { d } => d,
            ModelSpec::Model3 { .. } | ModelSpec::Model4 { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Model1 { .. } => "model1",
            ModelSpec::Model2 { .. } => "model2",
            ModelSpec::Model3 { .. } => "model3",
            ModelSpec::Model4 { .. } => "model4",
        }
    }

    /// The varied parameter for reporting: d for models 1-2, gamma for 3-4.
    pub fn param(&self) -> f64 {
        match *self {
            ModelSpec::Model1 { d } | ModelSpec::Model2 { d } => d as f64,
            ModelSpec::Model3 { gamma1 } => gamma1,
            ModelSpec::Model4 { gamma2 } => gamma2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::Config(format!(
                "sample size must be at least 100, got {}",
                self.n
            )));
        }
        if self.reps < 1 {
            return Err(Error::Config("at least one replication required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method required".into()));
        }
        Ok(())
    }
}

/// Rejection rates over the successful replications; failed replications
/// (estimation errors) are counted separately, never folded into the rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub model: ModelSpec,
    pub config: SimConfig,
    pub rates: Vec<(Method, f64)>,
    pub successes: usize,
    pub failures: usize,
}

/// Fixed 64-bit mixer (splitmix64 finalizer) deriving per-replication
/// stream keys from (seed, index).
pub fn mix64(seed: u64, r: u64) -> u64 {
    let mut z = seed ^ r.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rep_rng(seed: u64, r: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed, r))
}

/// Uniform on (0, 1), strictly interior so the inverse normal CDF is finite.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

fn uniform_in(rng: &mut impl RngCore, a: f64, b: f64) -> f64 {
    a + (b - a) * uniform01(rng)
}

fn standard_normal(rng: &mut impl RngCore) -> f64 {
    normal_quantile_fast(uniform01(rng))
}

fn var_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("z{j}")).collect()
}

/// Draw n observations from the model, already centered at zero cutoffs.
pub fn generate(model: &ModelSpec, n: usize, rng: &mut impl RngCore) -> Result<Dataset> {
    model.validate()?;
    let d = model.d();
    let mut values = Vec::with_capacity(n * d);
    match *model {
        ModelSpec::Model1 { d } => {
            for _ in 0..n {
                for _ in 0..d {
                    values.push(uniform_in(rng, -1.0, 1.0));
                }
            }
        }
        ModelSpec::Model2 { d } => {
            for _ in 0..n {
                for _ in 0..d {
                    values.push(1.0 + standard_normal(rng));
                }
            }
        }
        ModelSpec::Model3 { gamma1 } => {
            for _ in 0..n {
                let z1 = uniform_in(rng, -1.0, 1.0);
                let z2 = uniform_in(rng, -1.0, 1.0);
                let in_a1 = z1 < 0.0 && -z1 < z2;
                let in_a2 = z1 > z2 && z2 > 0.0;
                // The coin is consumed whenever the draw lands in a flip
                // region so the gamma1 = 0 stream matches the no-flip path.
                if in_a1 {
                    let flip = uniform01(rng) < gamma1;
                    values.push(if flip { -z1 } else { z1 });
                    values.push(z2);
                } else if in_a2 {
                    let flip = uniform01(rng) < gamma1;
                    values.push(z1);
                    values.push(if flip { -z2 } else { z2 });
                } else {
                    values.push(z1);
                    values.push(z2);
                }
            }
        }
        ModelSpec::Model4 { gamma2 } => {
            for _ in 0..n {
                values.push(standard_normal(rng));
                let side = uniform01(rng) < gamma2;
                values.push(if side {
                    uniform_in(rng, 0.0, 1.0)
                } else {
                    uniform_in(rng, -1.0, 0.0)
                });
            }
        }
    }
    Dataset::new_centered(values, n, d, var_names(d))
}

fn run_methods(
    dataset: &Dataset,
    methods: &[Method],
    alpha: f64,
    bw: BandwidthSpec,
    kernel: Kernel,
) -> Result<Vec<bool>> {
    let needs_marginals = methods
        .iter()
        .any(|m| matches!(m, Method::Mt | Method::MtMax | Method::Bct));
    let stats = if needs_marginals {
        Some(all_marginal_stats(dataset, bw, kernel)?)
    } else {
        None
    };
    methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::Mt => mt_test(stats.as_ref().unwrap(), alpha)?,
                Method::MtMax => mtmax_test(stats.as_ref().unwrap(), alpha)?,
                Method::Bct => bct_test(stats.as_ref().unwrap(), alpha)?,
                Method::Dt => distance_test(dataset, alpha, false, bw, kernel)?,
                Method::Sdt => distance_test(dataset, alpha, true, bw, kernel)?,
            };
            Ok(r.reject)
        })
        .collect()
}

/// Run the rejection-rate study. Replications execute in parallel; the
/// result is identical for identical (model, config) regardless of thread
/// count.
pub fn run_rejection_study(model: &ModelSpec, config: &SimConfig) -> Result<StudyResult> {
    model.validate()?;
    config.validate()?;
    let kernel = Kernel::Triangular;
    let bw = BandwidthSpec::AutoPlugin;

    let m = config.methods.len();
    // (per-method rejection counts, successes, failures)
    let (counts, successes, failures) = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rep_rng(config.seed, r);
            let rejects = generate(model, config.n, &mut rng)
                .and_then(|ds| run_methods(&ds, &config.methods, config.alpha, bw, kernel));
            match rejects {
                Ok(flags) => {
                    let mut c = vec![0usize; m];
                    for (ci, f) in c.iter_mut().zip(&flags) {
                        *ci = usize::from(*f);
                    }
                    (c, 1usize, 0usize)
                }
                Err(_) => (vec![0; m], 0, 1),
            }
        })
        .reduce(
            || (vec![0; m], 0, 0),
            |(mut ca, sa, fa), (cb, sb, fb)| {
                for (x, y) in ca.iter_mut().zip(&cb) {
                    *x += y;
                }
                (ca, sa + sb, fa + fb)
            },
        );

    if successes == 0 {
        return Err(Error::DegenerateSample);
    }
    let rates = config
        .methods
        .iter()
        .zip(&counts)
        .map(|(&mth, &c)| (mth, c as f64 / successes as f64))
        .collect();
    Ok(StudyResult {
        model: *model,
        config: config.clone(),
        rates,
        successes,
        failures,
    })
}

/// One point on a local asymptotic power curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPoint {
    pub k: f64,
    pub method: Method,
    pub power: f64,
}

/// Local asymptotic power by simulation from the limit experiment:
/// X ~ N(mu, I_d) with mu = k*1 (framework 1) or mu = k*e1 (framework 2).
/// DT/SDT have no limit in this experiment and are rejected as config.
pub fn local_asymptotic_power(
    framework: u8,
    d: usize,
    k_grid: &[f64],
    alpha: f64,
    methods: &[Method],
    draws: usize,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    if framework != 1 && framework != 2 {
        return Err(Error::Config(format!("framework must be 1 or 2, got {framework}")));
    }
    if d < 1 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if draws == 0 || methods.is_empty() || k_grid.is_empty() {
        return Err(Error::Config("draws, methods and k grid must be nonempty".into()));
    }
    if methods.iter().any(|m| matches!(m, Method::Dt | Method::Sdt)) {
        return Err(Error::Config(
            "local asymptotic power is defined for MT, MTMAX and BCT only".into(),
        ));
    }
    if k_grid.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::Config("k grid must be finite and nonnegative".into()));
    }

    let crit_mt = chi2_quantile_unchecked(1.0 - alpha, d as u32);
    let crit_max = max_abs_normal_quantile_unchecked(1.0 - alpha, d as u32);
    let crit_bct = normal_quantile_unchecked(1.0 - alpha / (2.0 * d as f64));

    let mut out = Vec::with_capacity(k_grid.len() * methods.len());
    for (gi, &k) in k_grid.iter().enumerate() {
        // Count per method in one pass over the draws, parallel by chunk.
        const CHUNK: usize = 1 << 14;
        let chunks = draws.div_ceil(CHUNK);
        let counts = (0..chunks as u64)
            .into_par_iter()
            .map(|c| {
                let mut rng = rep_rng(seed ^ (gi as u64) << 32, c);
                let lo = c as usize * CHUNK;
                let hi = (lo + CHUNK).min(draws);
                let mut mt = 0usize;
                let mut mx = 0usize;
                let mut bct = 0usize;
                for _ in lo..hi {
                    let mut ssq = 0.0;
                    let mut amax = 0.0f64;
                    for j in 0..d {
                        let mu = if framework == 1 || j == 0 { k } else { 0.0 };
                        let x = mu + standard_normal(&mut rng);
                        ssq += x * x;
                        amax = amax.max(x.abs());
                    }
                    if ssq > crit_mt {
                        mt += 1;
                    }
                    if amax > crit_max {
                        mx += 1;
                    }
                    if amax > crit_bct {
                        bct += 1;
                    }
                }
                (mt, mx, bct)
            })
            .reduce(
                || (0, 0, 0),
                |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
            );

        for &m in methods {
            let count = match m {
                Method::Mt => counts.0,
                Method::MtMax => counts.1,
                Method::Bct => counts.2,
                _ => unreachable!(),
            };
            out.push(PowerPoint {
                k,
                method: m,
                power: count as f64 / draws as f64,
            });
        }
    }
    Ok(out)
}
