//! Dataset preparation and per-variable discontinuity statistics.
//!
//! Datasets are centered so that the treatment region is exactly the
//! nonnegative orthant. For each running variable j, the statistic
//! theta_j is the jump of the conditional marginal density at 0, estimated
//! from boundary fits on the two side-restricted subsamples weighted by
//! their sample shares, with a robust bias-corrected variance from
//! order-q fits at the order-p bandwidths.

use crate::error::{Error, Result};
use crate::lpdensity::{
    fit_local_poly, select_bandwidth, variance_hat, widen_until_feasible, BandwidthSpec, Kernel,
    Sample, VarianceMethod,
};
use serde::{Deserialize, Serialize};

/// Point-estimation polynomial order.
pub const DEFAULT_P: usize = 2;
/// Inference order, run at the order-p bandwidth.
pub const DEFAULT_Q: usize = 3;
/// Undersmoothing factor applied to the plug-in bandwidth for inference.
/// The normal-reference pilot tends to oversmooth one-sided subsamples,
/// which leaves residual bias in the statistic and inflates size; shrinking
/// the MSE-optimal bandwidth keeps rejection rates near nominal.
pub const INFERENCE_UNDERSMOOTH: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TreatedAbove,
    TreatedBelow,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "above" | "treated_above" | "geq" => Ok(Direction::TreatedAbove),
            "below" | "treated_below" | "leq" => Ok(Direction::TreatedBelow),
            other => Err(Error::Config(format!("unknown direction '{other}'"))),
        }
    }
}

/// Cutoffs and treatment directions, one per running variable.
#[derive(Debug, Clone)]
pub struct CutoffSpec {
    pub cutoffs: Vec<f64>,
    pub directions: Vec<Direction>,
}

impl CutoffSpec {
    pub fn new(cutoffs: Vec<f64>, directions: Vec<Direction>) -> Result<Self> {
        if cutoffs.len() != directions.len() {
            return Err(Error::Config(format!(
                "cutoff count {} does not match direction count {}",
                cutoffs.len(),
                directions.len()
            )));
        }
        if cutoffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("cutoffs must be finite".into()));
        }
        Ok(Self { cutoffs, directions })
    }
}

/// An n x d matrix of running-variable observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    values: Vec<f64>, // row-major
    n: usize,
    d: usize,
    names: Vec<String>,
    centered: bool,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n: usize, d: usize, names: Vec<String>) -> Result<Self> {
        if n < 1 || d < 1 {
            return Err(Error::Config("dataset needs n >= 1 and d >= 1".into()));
        }
        if values.len() != n * d {
            return Err(Error::Config(format!(
                "expected {} values for an {n} x {d} dataset, got {}",
                n * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite entries".into()));
        }
        if names.len() != d {
            return Err(Error::Config("one variable name per column required".into()));
        }
        Ok(Self {
            values,
            n,
            d,
            names,
            centered: false,
        })
    }

    /// A dataset whose columns are already centered at zero cutoffs with
    /// treatment on the nonnegative orthant.
    pub fn new_centered(values: Vec<f64>, n: usize, d: usize, names: Vec<String>) -> Result<Self> {
        let mut ds = Self::new(values, n, d, names)?;
        ds.centered = true;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.d + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.d..(row + 1) * self.d]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, col)).collect()
    }

    /// Sample standard deviation of a column.
    pub fn column_sd(&self, col: usize) -> f64 {
        let column = self.column(col);
        let mean = column.iter().sum::<f64>() / self.n as f64;
        if self.n < 2 {
            return 0.0;
        }
        let ss: f64 = column.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (self.n - 1) as f64).sqrt()
    }

    /// Rescale every column by a positive factor; keeps the centering flag.
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Dataset> {
        if factors.len() != self.d {
            return Err(Error::Config("one scale factor per column required".into()));
        }
        if factors.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::DegenerateSample);
        }
        let mut values = self.values.clone();
        for i in 0..self.n {
            for j in 0..self.d {
                values[i * self.d + j] *= factors[j];
            }
        }
        Ok(Dataset {
            values,
            n: self.n,
            d: self.d,
            names: self.names.clone(),
            centered: self.centered,
        })
    }
}

/// Center each column at its cutoff and flip treated-below variables so the
/// treatment region becomes the nonnegative orthant. Observations exactly at
/// a cutoff land on the treated side.
pub fn center(dataset: &Dataset, spec: &CutoffSpec) -> Result<Dataset> {
    if spec.cutoffs.len() != dataset.d {
        return Err(Error::Config(format!(
            "cutoff count {} does not match dataset dimension {}",
            spec.cutoffs.len(),
            dataset.d
        )));
    }
    let mut values = Vec::with_capacity(dataset.values.len());
    for i in 0..dataset.n {
        for j in 0..dataset.d {
            let z = dataset.get(i, j);
            let c = spec.cutoffs[j];
            values.push(match spec.directions[j] {
                Direction::TreatedAbove => z - c,
                Direction::TreatedBelow => c - z,
            });
        }
    }
    Ok(Dataset {
        values,
        n: dataset.n,
        d: dataset.d,
        names: dataset.names.clone(),
        centered: true,
    })
}

/// The conditional subsample for variable j and its side counts.
#[derive(Debug, Clone)]
pub struct ConditionalSample {
    pub sample: Sample,
    pub n_j: usize,
    pub n_j_plus: usize,
    pub n_j_minus: usize,
}

/// Coordinates z_j of rows with all other coordinates nonnegative, sorted.
/// The boundary point 0 counts on the treated (plus) side.
pub fn conditional_subsample(dataset: &Dataset, j: usize) -> Result<ConditionalSample> {
    require_centered(dataset)?;
    if j >= dataset.d {
        return Err(Error::Config(format!(
            "variable index {j} out of range for d = {}",
            dataset.d
        )));
    }
    let mut values = Vec::new();
    let mut n_plus = 0usize;
    for i in 0..dataset.n {
        let row = dataset.row(i);
        let others_treated = row
            .iter()
            .enumerate()
            .all(|(k, v)| k == j || *v >= 0.0);
        if others_treated {
            if row[j] >= 0.0 {
                n_plus += 1;
            }
            values.push(row[j]);
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientLocalData { needed: 1, found: 0 });
    }
    let n_j = values.len();
    Ok(ConditionalSample {
        sample: Sample::new(values)?,
        n_j,
        n_j_plus: n_plus,
        n_j_minus: n_j - n_plus,
    })
}

fn require_centered(dataset: &Dataset) -> Result<()> {
    if dataset.centered {
        Ok(())
    } else {
        Err(Error::Config("dataset must be centered first".into()))
    }
}

/// Per-variable discontinuity record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalStat {
    pub j: usize,
    pub theta_hat: f64,
    pub sigma2_hat: f64,
    pub n_j: usize,
    pub n_j_plus: usize,
    pub n_j_minus: usize,
    pub h_plus: f64,
    pub h_minus: f64,
    pub f_plus: f64,
    pub f_minus: f64,
}

impl MarginalStat {
    /// Standardized statistic theta / sigma.
    pub fn z_score(&self) -> f64 {
        self.theta_hat / self.sigma2_hat.sqrt()
    }
}

struct SideFit {
    density: f64,
    bandwidth: f64,
    variance: f64,
}

fn side_fit(
    values: Vec<f64>,
    support: (f64, f64),
    bw: BandwidthSpec,
    kernel: Kernel,
    p: usize,
    q: usize,
) -> Result<SideFit> {
    let min_local = q + 2;
    if values.len() < min_local {
        return Err(Error::InsufficientLocalData {
            needed: min_local,
            found: values.len(),
        });
    }
    let sample = Sample::with_support(values, support.0, support.1)?;
    let h0 = match bw {
        BandwidthSpec::AutoPlugin => {
            INFERENCE_UNDERSMOOTH * select_bandwidth(&sample, 0.0, p, kernel, bw)?
        }
        BandwidthSpec::Fixed(_) => select_bandwidth(&sample, 0.0, p, kernel, bw)?,
    };
    // Both the order-p point fit and the order-q variance fit run at this
    // bandwidth; widen only in auto mode.
    let h = match bw {
        BandwidthSpec::AutoPlugin => widen_until_feasible(&sample, 0.0, h0, min_local)?,
        BandwidthSpec::Fixed(_) => h0,
    };
    // Robust bias correction: the bandwidth is MSE-optimal for the order-p
    // fit, but both the density entering the statistic and its variance come
    // from the order-q fit at that bandwidth, so the statistic is correctly
    // studentized after bias removal.
    let fit = fit_local_poly(&sample, 0.0, h, q, kernel)?;
    let var = variance_hat(&sample, 0.0, h, q, kernel, VarianceMethod::FastIdentity)?;
    Ok(SideFit {
        density: fit.density,
        bandwidth: h,
        variance: var.value,
    })
}

/// The discontinuity statistic theta_j with its variance, using the default
/// orders p = 2 (bandwidth selection) and q = 3 (bias-corrected estimate
/// and variance at the p-order bandwidth).
pub fn marginal_stat(
    dataset: &Dataset,
    j: usize,
    bw: BandwidthSpec,
    kernel: Kernel,
) -> Result<MarginalStat> {
    marginal_stat_with_orders(dataset, j, bw, kernel, DEFAULT_P, DEFAULT_Q)
}

pub fn marginal_stat_with_orders(
    dataset: &Dataset,
    j: usize,
    bw: BandwidthSpec,
    kernel: Kernel,
    p: usize,
    q: usize,
) -> Result<MarginalStat> {
    let cond = conditional_subsample(dataset, j)?;
    let mut right = Vec::with_capacity(cond.n_j_plus);
    let mut left = Vec::with_capacity(cond.n_j_minus);
    for &v in cond.sample.values() {
        if v >= 0.0 {
            right.push(v);
        } else {
            left.push(v);
        }
    }

    // A side with zero observations carries zero empirical mass at the
    // boundary: its density and variance contributions are exactly zero (a
    // one-sided vanishing density is the strongest manipulation signal, not
    // an estimation failure). A sparse but nonempty side still errors
    // inside side_fit.
    let plus = if right.is_empty() {
        None
    } else {
        Some(side_fit(right, (0.0, f64::INFINITY), bw, kernel, p, q)?)
    };
    let minus = if left.is_empty() {
        None
    } else {
        Some(side_fit(left, (f64::NEG_INFINITY, 0.0), bw, kernel, p, q)?)
    };

    let n_j = cond.n_j as f64;
    let share_plus = cond.n_j_plus as f64 / n_j;
    let share_minus = cond.n_j_minus as f64 / n_j;
    let f_plus = plus
        .as_ref()
        .map_or(0.0, |s| share_plus * s.density.max(0.0));
    let f_minus = minus
        .as_ref()
        .map_or(0.0, |s| share_minus * s.density.max(0.0));

    let sigma2_hat = plus
        .as_ref()
        .map_or(0.0, |s| cond.n_j_plus as f64 / (s.bandwidth * n_j * n_j) * s.variance)
        + minus
            .as_ref()
            .map_or(0.0, |s| cond.n_j_minus as f64 / (s.bandwidth * n_j * n_j) * s.variance);
    if !(sigma2_hat > 0.0) || !sigma2_hat.is_finite() {
        return Err(Error::DegenerateVariance);
    }

    // For reporting only: an empty side inherits the other side's
    // bandwidth so both stay positive.
    let h_fallback = plus
        .as_ref()
        .or(minus.as_ref())
        .map(|s| s.bandwidth)
        .expect("at least one side is nonempty");
    Ok(MarginalStat {
        j,
        theta_hat: f_plus - f_minus,
        sigma2_hat,
        n_j: cond.n_j,
        n_j_plus: cond.n_j_plus,
        n_j_minus: cond.n_j_minus,
        h_plus: plus.as_ref().map_or(h_fallback, |s| s.bandwidth),
        h_minus: minus.as_ref().map_or(h_fallback, |s| s.bandwidth),
        f_plus,
        f_minus,
    })
}

/// Marginal statistics for every variable of a centered dataset.
pub fn all_marginal_stats(
    dataset: &Dataset,
    bw: BandwidthSpec,
    kernel: Kernel,
) -> Result<Vec<MarginalStat>> {
    (0..dataset.d())
        .map(|j| marginal_stat(dataset, j, bw, kernel))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|j| format!("z{j}")).collect()
    }

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        ((z >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    #[test]
    fn center_handles_treated_below() {
        let ds = Dataset::new(vec![25000.0, 0.65], 1, 2, names(2)).unwrap();
        let spec = CutoffSpec::new(
            vec![30000.0, 0.7],
            vec![Direction::TreatedBelow, Direction::TreatedBelow],
        )
        .unwrap();
        let centered = center(&ds, &spec).unwrap();
        assert!((centered.get(0, 0) - 5000.0).abs() < 1e-9);
        assert!((centered.get(0, 1) - 0.05).abs() < 1e-12);
        assert!(centered.row(0).iter().all(|v| *v >= 0.0)); // treated
    }

    #[test]
    fn center_identity_and_boundary_convention() {
        let ds = Dataset::new(vec![1.0, -2.0], 1, 2, names(2)).unwrap();
        let spec = CutoffSpec::new(
            vec![0.0, 0.0],
            vec![Direction::TreatedAbove, Direction::TreatedAbove],
        )
        .unwrap();
        let centered = center(&ds, &spec).unwrap();
        assert_eq!(centered.get(0, 0), 1.0);
        assert_eq!(centered.get(0, 1), -2.0);

        let at_cutoff = Dataset::new(vec![3.0, 0.7], 1, 2, names(2)).unwrap();
        let spec = CutoffSpec::new(
            vec![3.0, 0.7],
            vec![Direction::TreatedAbove, Direction::TreatedBelow],
        )
        .unwrap();
        let centered = center(&at_cutoff, &spec).unwrap();
        assert_eq!(centered.row(0), &[0.0, 0.0]);
        assert!(centered.row(0).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn center_rejects_dimension_mismatch() {
        let ds = Dataset::new(vec![1.0, 2.0], 1, 2, names(2)).unwrap();
        let spec = CutoffSpec::new(vec![0.0], vec![Direction::TreatedAbove]).unwrap();
        assert!(matches!(center(&ds, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn conditional_subsample_filters_and_counts() {
        let ds = Dataset::new_centered(
            vec![1.0, 1.0, -1.0, 1.0, 1.0, -1.0],
            3,
            2,
            names(2),
        )
        .unwrap();
        let cond = conditional_subsample(&ds, 0).unwrap();
        assert_eq!(cond.sample.values(), &[-1.0, 1.0]);
        assert_eq!(cond.n_j, 2);
        assert_eq!(cond.n_j_plus, 1);
        assert_eq!(cond.n_j_minus, 1);
        assert_eq!(cond.n_j, cond.n_j_plus + cond.n_j_minus);
    }

    #[test]
    fn conditional_subsample_vacuous_for_one_dimension() {
        let ds = Dataset::new_centered(vec![-0.5, 0.2, 0.9], 3, 1, names(1)).unwrap();
        let cond = conditional_subsample(&ds, 0).unwrap();
        assert_eq!(cond.n_j, 3);
    }

    #[test]
    fn conditional_subsample_empty_errors() {
        let ds = Dataset::new_centered(vec![1.0, -1.0, 2.0, -2.0], 2, 2, names(2)).unwrap();
        assert!(matches!(
            conditional_subsample(&ds, 0),
            Err(Error::InsufficientLocalData { .. })
        ));
    }

    #[test]
    fn conditional_subsample_requires_centering() {
        let ds = Dataset::new(vec![1.0, 1.0], 1, 2, names(2)).unwrap();
        assert!(conditional_subsample(&ds, 0).is_err());
    }

    fn mirrored_dataset(n_half: usize, seed: u64) -> Dataset {
        // Rows (a, b) and (-a, b) with b >= 0, a > 0: exactly symmetric in z1.
        let mut state = seed;
        let mut values = Vec::new();
        for _ in 0..n_half {
            let a = 0.01 + 0.99 * splitmix(&mut state);
            let b = splitmix(&mut state);
            values.extend_from_slice(&[a, b]);
            values.extend_from_slice(&[-a, b]);
        }
        Dataset::new_centered(values, 2 * n_half, 2, names(2)).unwrap()
    }

    #[test]
    fn mirrored_sample_gives_zero_theta() {
        let ds = mirrored_dataset(400, 42);
        let stat = marginal_stat(&ds, 0, BandwidthSpec::Fixed(0.4), Kernel::Triangular).unwrap();
        assert!(stat.theta_hat.abs() < 1e-10, "theta {}", stat.theta_hat);
        assert_eq!(stat.n_j_plus, stat.n_j_minus);
        assert_eq!(stat.n_j, stat.n_j_plus + stat.n_j_minus);
    }

    fn model1_dataset(n: usize, seed: u64) -> Dataset {
        let mut state = seed;
        let values: Vec<f64> = (0..2 * n).map(|_| 2.0 * splitmix(&mut state) - 1.0).collect();
        Dataset::new_centered(values, n, 2, names(2)).unwrap()
    }

    #[test]
    fn theta_covered_by_three_sigma_under_the_null() {
        // True theta_j = 0 for U(-1,1)^2; Monte Carlo coverage at 3 sigma.
        let mut covered = 0;
        let total = 200;
        for seed in 0..total {
            let ds = model1_dataset(5000, 900 + seed);
            let stat =
                marginal_stat(&ds, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular).unwrap();
            if stat.theta_hat.abs() <= 3.0 * stat.sigma2_hat.sqrt() {
                covered += 1;
            }
        }
        assert!(
            covered as f64 >= 0.95 * total as f64,
            "covered {covered}/{total}"
        );
    }

    #[test]
    fn scale_invariance_of_standardized_statistic() {
        let ds = model1_dataset(4000, 7);
        let base = marginal_stat(&ds, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular).unwrap();
        let scaled = ds.scale_columns(&[1000.0, 1.0]).unwrap();
        let stat =
            marginal_stat(&scaled, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular).unwrap();
        assert!(
            (stat.z_score() - base.z_score()).abs() < 1e-8,
            "{} vs {}",
            stat.z_score(),
            base.z_score()
        );
    }

    #[test]
    fn permutation_and_conditioning_set_invariance() {
        let ds = model1_dataset(1000, 21);
        let base = marginal_stat(&ds, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular).unwrap();

        // Reverse the rows.
        let mut rows: Vec<Vec<f64>> = (0..ds.n()).map(|i| ds.row(i).to_vec()).collect();
        rows.reverse();
        let permuted = Dataset::new_centered(
            rows.concat(),
            ds.n(),
            ds.d(),
            ds.names().to_vec(),
        )
        .unwrap();
        let stat = marginal_stat(&permuted, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular)
            .unwrap();
        assert!((stat.theta_hat - base.theta_hat).abs() < 1e-12);
        assert!((stat.sigma2_hat - base.sigma2_hat).abs() < 1e-12);

        // Drop rows outside the conditioning event for j = 0.
        let kept: Vec<Vec<f64>> = (0..ds.n())
            .map(|i| ds.row(i).to_vec())
            .filter(|r| r[1] >= 0.0)
            .collect();
        let n_kept = kept.len();
        let reduced =
            Dataset::new_centered(kept.concat(), n_kept, 2, ds.names().to_vec()).unwrap();
        let stat = marginal_stat(&reduced, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular)
            .unwrap();
        assert_eq!(stat.theta_hat, base.theta_hat);
        assert_eq!(stat.sigma2_hat, base.sigma2_hat);
        assert_eq!(stat.n_j, base.n_j);
    }
}
