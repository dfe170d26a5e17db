//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line.
//!
//! Monte Carlo thresholds were frozen from oracle runs at the recorded
//! seeds; see the per-test comments for the observed values.

use mrdtest::lpdensity::{fit_local_poly, variance_hat, Sample, VarianceMethod};
use mrdtest::montecarlo::{rep_rng, uniform01};
use mrdtest::statdist::{chi2_quantile, max_abs_normal_quantile, normal_cdf, ProbabilityValue};
use mrdtest::{
    distance_test, generate, local_asymptotic_power, marginal_stat, mt_test,
    run_rejection_study, BandwidthSpec, Dataset, Kernel, Method, ModelSpec, SimConfig,
};
use std::process::Command;
use std::sync::OnceLock;

const SEED: u64 = 20240901;

fn report(criterion: usize, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn prob(p: f64) -> ProbabilityValue {
    ProbabilityValue::new(p).unwrap()
}

fn rate(study: &mrdtest::StudyResult, m: Method) -> f64 {
    study
        .rates
        .iter()
        .find(|(method, _)| *method == m)
        .map(|(_, r)| *r)
        .unwrap()
}

/// The Table-2-scale studies are shared between criteria 1 and 2.
fn size_studies() -> &'static [mrdtest::StudyResult; 2] {
    static STUDIES: OnceLock<[mrdtest::StudyResult; 2]> = OnceLock::new();
    STUDIES.get_or_init(|| {
        let config = SimConfig {
            n: 2000,
            reps: 1000,
            alpha: 0.05,
            seed: SEED,
            methods: vec![Method::Mt, Method::Bct, Method::Dt, Method::Sdt],
        };
        [
            run_rejection_study(&ModelSpec::Model1 { d: 2 }, &config).unwrap(),
            run_rejection_study(&ModelSpec::Model2 { d: 2 }, &config).unwrap(),
        ]
    })
}

#[test]
fn criterion_01_size_reproduction() {
    // Oracle run at seed 20240901: model1 MT/BCT/DT/SDT =
    // 0.047/0.045/0.050/0.050; model2 = 0.054/0.057/0.060/0.060.
    let mut ok = true;
    let mut detail = String::new();
    for study in size_studies() {
        for (m, lo, hi) in [
            (Method::Mt, 0.015, 0.065),
            (Method::Bct, 0.015, 0.065),
            (Method::Dt, 0.025, 0.075),
            (Method::Sdt, 0.025, 0.075),
        ] {
            let r = rate(study, m);
            detail.push_str(&format!("{} {m}={r:.3} ", study.model.name()));
            ok &= (lo..=hi).contains(&r) && study.failures == 0;
        }
    }
    report(1, ok, detail.trim());
}

#[test]
fn criterion_02_under_rejection_direction() {
    let bound = 0.05 + 3.0 * (0.05f64 * 0.95 / 1000.0).sqrt();
    let mut worst: f64 = 0.0;
    for study in size_studies() {
        for (_, r) in &study.rates {
            worst = worst.max(*r);
        }
    }
    report(
        2,
        worst <= bound,
        &format!("max rate {worst:.3} <= bound {bound:.3}"),
    );
}

#[test]
fn criterion_03_dt_sdt_inconsistent_on_model3() {
    // Oracle run at seed 20240901: MT 0.980, BCT 0.964, DT 0.052, SDT 0.048.
    let config = SimConfig {
        n: 2000,
        reps: 500,
        alpha: 0.05,
        seed: SEED,
        methods: vec![Method::Mt, Method::Bct, Method::Dt, Method::Sdt],
    };
    let study = run_rejection_study(&ModelSpec::Model3 { gamma1: 0.8 }, &config).unwrap();
    let (mt, bct) = (rate(&study, Method::Mt), rate(&study, Method::Bct));
    let (dt, sdt) = (rate(&study, Method::Dt), rate(&study, Method::Sdt));
    let ok = mt > 0.30
        && bct > 0.30
        && (0.01..=0.09).contains(&dt)
        && (0.01..=0.09).contains(&sdt);
    report(3, ok, &format!("MT={mt:.3} BCT={bct:.3} DT={dt:.3} SDT={sdt:.3}"));
}

#[test]
fn criterion_04_model4_ordering() {
    // Oracle run at seed 20240901: MT 0.512, BCT 0.548, SDT 0.226.
    let config = SimConfig {
        n: 2000,
        reps: 500,
        alpha: 0.05,
        seed: SEED,
        methods: vec![Method::Mt, Method::Bct, Method::Sdt],
    };
    let study = run_rejection_study(&ModelSpec::Model4 { gamma2: 0.8 }, &config).unwrap();
    let (mt, bct, sdt) = (
        rate(&study, Method::Mt),
        rate(&study, Method::Bct),
        rate(&study, Method::Sdt),
    );
    let ok = (mt - bct).abs() <= 0.1 && mt > sdt && bct > sdt;
    report(4, ok, &format!("MT={mt:.3} BCT={bct:.3} SDT={sdt:.3}"));
}

#[test]
fn criterion_05_local_asymptotic_power() {
    let draws = 1_000_000usize;
    let alpha = 0.1;
    let grid: Vec<f64> = (1..=8).map(|i| 0.5 * i as f64).collect();
    let methods = [Method::Mt, Method::MtMax, Method::Bct];
    let power_of = |pts: &[mrdtest::PowerPoint], k: f64, m: Method| {
        pts.iter()
            .find(|p| p.k == k && p.method == m)
            .map(|p| p.power)
            .unwrap()
    };

    let mut ok = true;
    let mut detail = String::new();

    // Framework 1: MT dominates BCT everywhere and the gap grows with d.
    // The gap is compared at k = 1.5: at k = 2 the d = 8 chi-square power
    // already saturates near 1 (noncentrality d k^2 = 32 against the
    // chi-square_8 10% critical value 13.36), which mechanically shrinks
    // the gap again, so the unsaturated point is the meaningful one.
    let mut gaps = Vec::new();
    for d in [2usize, 5, 8] {
        let pts = local_asymptotic_power(1, d, &grid, alpha, &methods, draws, SEED).unwrap();
        for &k in &grid {
            let mt = power_of(&pts, k, Method::Mt);
            let bct = power_of(&pts, k, Method::Bct);
            // Strict dominance, except where both curves have saturated at
            // power one and the simulated values tie.
            let pair_ok = mt > bct || (mt >= bct && bct > 0.9995);
            if !pair_ok {
                detail.push_str(&format!("F1 d={d} k={k}: MT={mt:.4} !> BCT={bct:.4} "));
            }
            ok &= pair_ok;
        }
        let gap = power_of(&pts, 1.5, Method::Mt) - power_of(&pts, 1.5, Method::Bct);
        detail.push_str(&format!("F1 d={d} gap(k=1.5)={gap:.3} "));
        gaps.push(gap);
    }
    ok &= gaps[0] < gaps[1] && gaps[1] < gaps[2];

    // Framework 2, d = 8: order reverses in k; MTMAX dominates BCT within
    // two simulation standard errors.
    let pts = local_asymptotic_power(2, 8, &grid, alpha, &methods, draws, SEED).unwrap();
    let mt_low = power_of(&pts, 0.5, Method::Mt);
    let bct_low = power_of(&pts, 0.5, Method::Bct);
    let mt_high = power_of(&pts, 4.0, Method::Mt);
    let bct_high = power_of(&pts, 4.0, Method::Bct);
    ok &= mt_low > bct_low && bct_high > mt_high;
    detail.push_str(&format!(
        "F2 d=8 k=0.5 MT={mt_low:.3}>BCT={bct_low:.3}, k=4 BCT={bct_high:.3}>MT={mt_high:.3}"
    ));
    for &k in &grid {
        let b = power_of(&pts, k, Method::Bct);
        let m = power_of(&pts, k, Method::MtMax);
        let se = (b * (1.0 - b) / draws as f64).sqrt();
        if m < b - 2.0 * se {
            detail.push_str(&format!(" F2 k={k}: MTMAX={m:.4} < BCT={b:.4}-2se"));
        }
        ok &= m >= b - 2.0 * se;
    }
    report(5, ok, &detail);
}

#[test]
fn criterion_06_variance_oracle_equivalence() {
    let mut worst: f64 = 0.0;
    let mut idx = 0u64;
    'outer: for &n in &[10usize, 20, 30, 50] {
        for _ in 0..7 {
            if idx >= 25 {
                break 'outer;
            }
            let mut rng = rep_rng(314159, idx);
            idx += 1;
            // Alternate supports: full line, right half line, left half line.
            let (lo, hi, shift) = match idx % 3 {
                0 => (f64::NEG_INFINITY, f64::INFINITY, -0.5),
                1 => (0.0, f64::INFINITY, 0.0),
                _ => (f64::NEG_INFINITY, 0.0, -1.0),
            };
            let values: Vec<f64> = (0..n).map(|_| uniform01(&mut rng) + shift).collect();
            let sample = Sample::with_support(values, lo, hi).unwrap();
            let x = 0.0;
            let h = 1.1; // covers every observation
            for q in [2usize, 3] {
                let fast =
                    variance_hat(&sample, x, h, q, Kernel::Triangular, VarianceMethod::FastIdentity)
                        .unwrap()
                        .value;
                let naive = variance_hat(
                    &sample,
                    x,
                    h,
                    q,
                    Kernel::Triangular,
                    VarianceMethod::NaiveTripleSum,
                )
                .unwrap()
                .value;
                let rel = (fast - naive).abs() / naive.abs().max(1e-300);
                worst = worst.max(rel);
            }
        }
    }
    report(6, worst < 1e-10, &format!("worst relative diff {worst:.2e}"));
}

#[test]
fn criterion_07_distribution_utilities() {
    let q = chi2_quantile(prob(0.95), 2).unwrap();
    let mut ok = (q - 5.991464547).abs() < 1e-7;
    let mut worst: f64 = 0.0;
    for d in 1..=8u32 {
        for &alpha in &[0.01, 0.05, 0.1, 0.2, 0.5] {
            let c = max_abs_normal_quantile(prob(1.0 - alpha), d).unwrap();
            let lhs = (2.0 * normal_cdf(c).unwrap().value() - 1.0).powi(d as i32);
            worst = worst.max((lhs - (1.0 - alpha)).abs());
        }
    }
    ok &= worst < 1e-10;
    report(
        7,
        ok,
        &format!("chi2(0.95,2)={q:.9}, worst identity error {worst:.2e}"),
    );
}

#[test]
fn criterion_08_estimator_consistency() {
    // Fixed bandwidths isolate the estimator's consistency from the
    // bandwidth selector (for uniform targets any h is unbiased).
    let n = 5000usize;
    let fit_at_zero = |values: Vec<f64>, lo: f64, hi: f64, h: f64| {
        let sample = Sample::with_support(values, lo, hi).unwrap();
        fit_local_poly(&sample, 0.0, h, 2, Kernel::Triangular)
            .unwrap()
            .density
    };

    let mut interior_sum = 0.0;
    let mut interior_worst: f64 = 0.0;
    let mut boundary_sum = 0.0;
    let mut boundary_worst: f64 = 0.0;
    for r in 0..50u64 {
        let mut rng = rep_rng(271828, r);
        let vals: Vec<f64> = (0..n).map(|_| 2.0 * uniform01(&mut rng) - 1.0).collect();
        let f = fit_at_zero(vals, -1.0, 1.0, 0.3);
        interior_sum += f;
        interior_worst = interior_worst.max((f - 0.5).abs());

        let mut rng = rep_rng(161803, r);
        let vals: Vec<f64> = (0..n).map(|_| uniform01(&mut rng)).collect();
        let f = fit_at_zero(vals, 0.0, 1.0, 0.5);
        boundary_sum += f;
        boundary_worst = boundary_worst.max((f - 1.0).abs());
    }
    let interior_mean = interior_sum / 50.0;
    let boundary_mean = boundary_sum / 50.0;
    let ok = (interior_mean - 0.5).abs() <= 0.02
        && interior_worst <= 0.08
        && (boundary_mean - 1.0).abs() <= 0.04
        && boundary_worst <= 0.12;
    report(
        8,
        ok,
        &format!(
            "interior mean {interior_mean:.4} worst err {interior_worst:.3}, boundary mean {boundary_mean:.4} worst err {boundary_worst:.3}"
        ),
    );
}

#[test]
fn criterion_09_exact_invariants() {
    let mut ok = true;
    let mut detail = String::new();

    // Mirrored sample: theta_hat exactly zero.
    let mut values = Vec::new();
    let mut rng = rep_rng(55, 0);
    for _ in 0..400 {
        let a = uniform01(&mut rng) + 0.01;
        let b = uniform01(&mut rng);
        values.extend_from_slice(&[a, b]);
        values.extend_from_slice(&[-a, b]);
    }
    let ds = Dataset::new_centered(values, 800, 2, vec!["a".into(), "b".into()]).unwrap();
    let st = marginal_stat(&ds, 0, BandwidthSpec::Fixed(0.4), Kernel::Triangular).unwrap();
    ok &= st.theta_hat.abs() < 1e-10;
    detail.push_str(&format!("mirrored |theta|={:.1e} ", st.theta_hat.abs()));

    // Scale invariance of the standardized statistic under column
    // rescaling by 1000 with auto bandwidths.
    let mut rng = rep_rng(SEED, 3);
    let ds = generate(&ModelSpec::Model1 { d: 2 }, 2000, &mut rng).unwrap();
    let z0 = marginal_stat(&ds, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap()
        .z_score();
    let scaled = ds.scale_columns(&[1000.0, 1.0]).unwrap();
    let z1 = marginal_stat(&scaled, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap()
        .z_score();
    ok &= (z0 - z1).abs() < 1e-8;
    detail.push_str(&format!("scale |dz|={:.1e} ", (z0 - z1).abs()));

    // MT with one variable is exactly the squared two-sided z-test.
    let one = Dataset::new_centered(ds.column(0), ds.n(), 1, vec!["z1".into()]).unwrap();
    let s1 = marginal_stat(&one, 0, BandwidthSpec::AutoPlugin, Kernel::Triangular).unwrap();
    let mt = mt_test(&[s1.clone()], 0.05).unwrap();
    let z_abs = s1.z_score().abs();
    let two_sided = 2.0 * (1.0 - normal_cdf(z_abs).unwrap().value());
    ok &= (mt.statistic - z_abs * z_abs).abs() < 1e-10
        && (mt.p_value - two_sided).abs() < 1e-10;
    detail.push_str(&format!("MT d=1 |dp|={:.1e} ", (mt.p_value - two_sided).abs()));

    // SDT is invariant to anisotropic column rescaling; DT is not.
    let sdt0 = distance_test(&ds, 0.05, true, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap();
    let sdt1 = distance_test(&scaled, 0.05, true, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap();
    ok &= sdt0.reject == sdt1.reject && (sdt0.statistic - sdt1.statistic).abs() < 1e-6;
    let dt0 = distance_test(&ds, 0.05, false, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap();
    let dt1 = distance_test(&scaled, 0.05, false, BandwidthSpec::AutoPlugin, Kernel::Triangular)
        .unwrap();
    ok &= (dt0.statistic - dt1.statistic).abs() > 1e-3;
    detail.push_str(&format!(
        "SDT |ds|={:.1e}, DT |ds|={:.1e}",
        (sdt0.statistic - sdt1.statistic).abs(),
        (dt0.statistic - dt1.statistic).abs()
    ));

    report(9, ok, &detail);
}

#[test]
fn criterion_10_simulate_determinism() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_mrdtest"))
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "simulate", "--model", "model1", "--d", "2", "--n", "500", "--reps", "50",
                "--seed", "99", "--format", "csv",
            ])
            .output()
            .expect("binary runs")
    };
    let a = run("8");
    let b = run("8");
    let c = run("1");
    let ok = a.status.success() && a.stdout == b.stdout && a.stdout == c.stdout;
    report(10, ok, "byte-identical across reruns and thread counts");
}
