mod common;

use common::{did_oracle, panel, panel_with_fte};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vacancy_core::did::{
    self, detrend_pre, did_of_means, event_study, fit_twfe_did, fit_twfe_did_with, implied_hire_growth, ols,
    student_adjust, synthetic_control, synthetic_control_with_donors, wild_cluster_bootstrap, BootstrapOptions,
    ClusterLevel, DidError, FitMethod, Pivot, SeKind, StudentAdjustMode, SynthOptions,
};

fn random_rows(rng: &mut ChaCha8Rng, n_units: usize, n_years: usize) -> Vec<Vec<f64>> {
    (0..n_units)
        .map(|_| (0..n_years).map(|_| rng.random_range(0.0..0.1)).collect())
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| solve(a.to_vec(), (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, k) = (20, 3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![1.0, rng.random_range(-2.0..2.0), (i as f64).sin() + rng.random_range(0.0..1.0)])
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| 0.5 + 1.5 * r[1] - 0.7 * r[2] + rng.random_range(-0.3..0.3)).collect();

    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| rows.iter().map(|r| r[a] * r[b]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..k).map(|a| rows.iter().zip(&y).map(|(r, y)| r[a] * y).sum()).collect();
    let beta = solve(xtx.clone(), xty);

    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let fit = ols(&x, &DVector::from_vec(y.clone())).unwrap();
    for j in 0..k {
        assert!((fit.coefficients[j] - beta[j]).abs() < 1e-10, "coef {j}");
    }

    // HC1 sandwich by hand
    let inv = invert(&xtx);
    let e: Vec<f64> = rows
        .iter()
        .zip(&y)
        .map(|(r, y)| y - (0..k).map(|j| r[j] * beta[j]).sum::<f64>())
        .collect();
    let meat: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| rows.iter().zip(&e).map(|(r, e)| r[a] * r[b] * e * e).sum()).collect())
        .collect();
    let scale = n as f64 / (n - k) as f64;
    let hc = fit.standard_errors(SeKind::HcRobust, None).unwrap();
    let ssr: f64 = e.iter().map(|v| v * v).sum();
    let iid = fit.standard_errors(SeKind::Iid, None).unwrap();
    for j in 0..k {
        let v: f64 = (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .map(|(a, b)| inv[j][a] * meat[a][b] * inv[b][j])
            .sum();
        assert!((hc[j] - (v * scale).sqrt()).abs() < 1e-10, "hc {j}");
        assert!((iid[j] - (inv[j][j] * ssr / (n - k) as f64).sqrt()).abs() < 1e-10, "iid {j}");
    }
}

#[test]
fn ols_flags_collinear_columns() {
    let x = DMatrix::from_fn(6, 3, |i, j| match j {
        0 => 1.0,
        1 => i as f64,
        _ => 2.0 + 3.0 * i as f64,
    });
    let y = DVector::from_fn(6, |i, _| i as f64);
    assert_eq!(ols(&x, &y).unwrap_err(), DidError::RankDeficient { columns: vec![2] });
}

#[test]
fn noiseless_fixture_recovers_injected_effect() {
    let data = vacancy_core::fixtures::noiseless_did_panel();
    let p = did::OutcomePanel::from_dataset(&data, &did::DesignSpec::new("CAM")).unwrap();
    let fit = fit_twfe_did(&p).unwrap();
    assert!((fit.delta - 0.016).abs() < 1e-10, "{}", fit.delta);
    let dummy = fit_twfe_did_with(&p, FitMethod::Dummy).unwrap();
    assert!((dummy.delta - 0.016).abs() < 1e-10);
}

#[test]
fn within_and_dummy_standard_errors_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = random_rows(&mut rng, 8, 9);
    let p = panel(&rows, 2, 2011);
    let w = fit_twfe_did_with(&p, FitMethod::Within).unwrap();
    let d = fit_twfe_did_with(&p, FitMethod::Dummy).unwrap();
    assert!((w.delta - d.delta).abs() < 1e-12);
    for kind in [SeKind::Iid, SeKind::HcRobust, SeKind::ClusterByUnit] {
        let (a, b) = (w.standard_errors.get(kind), d.standard_errors.get(kind));
        assert!((a - b).abs() < 1e-10 * b.max(1e-12) + 1e-14, "{kind}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn twfe_equals_difference_of_means(seed in any::<u64>(), treated in 0usize..23) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 23, 15);
        let p = panel(&rows, treated, 2012);
        let fit = fit_twfe_did(&p).unwrap();
        let oracle = did_oracle(&rows, treated, 5);
        prop_assert!((fit.delta - oracle).abs() < 1e-8);
        prop_assert!((did_of_means(&p).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn delta_is_location_and_scale_equivariant(
        seed in any::<u64>(),
        shift in -5.0f64..5.0,
        scale in prop::sample::select(vec![-3.0, 0.5, 2.0, 10.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 6, 8);
        let base = fit_twfe_did(&panel(&rows, 0, 2010)).unwrap().delta;
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        prop_assert!((fit_twfe_did(&panel(&shifted, 0, 2010)).unwrap().delta - base).abs() < 1e-10);
        prop_assert!((fit_twfe_did(&panel(&scaled, 0, 2010)).unwrap().delta - scale * base).abs() < 1e-10);
    }

    #[test]
    fn global_trend_absorbed_by_detrending(
        levels in prop::collection::vec(-1.0f64..1.0, 6),
        shocks in prop::collection::vec(-0.5f64..0.5, 10),
        slope in -0.2f64..0.2,
        effect in -0.1f64..0.1,
    ) {
        let rows: Vec<Vec<f64>> = levels
            .iter()
            .enumerate()
            .map(|(u, a)| {
                (0..10)
                    .map(|t| a + slope * t as f64 + shocks[t] + if u == 0 && t >= 5 { effect } else { 0.0 })
                    .collect()
            })
            .collect();
        let p = panel(&rows, 0, 2012);
        let (detrended, _) = detrend_pre(&p).unwrap();
        let raw = did_of_means(&p).unwrap();
        prop_assert!((did_of_means(&detrended).unwrap() - raw).abs() < 1e-8);
        prop_assert!((raw - effect).abs() < 1e-10);
    }

    #[test]
    fn synth_weights_stay_on_simplex(seed in any::<u64>(), n_donors in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n_donors + 1, 8);
        let p = panel(&rows, 0, 2012);
        let r = synthetic_control(&p, SynthOptions::default()).unwrap();
        let sum: f64 = r.weights.iter().map(|(_, w)| w).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(r.weights.iter().all(|(_, w)| *w >= 0.0));
        // never worse than the uniform starting point
        let uniform_rmse = {
            let gaps: Vec<f64> = (0..5)
                .map(|t| rows[0][t] - rows[1..].iter().map(|d| d[t]).sum::<f64>() / n_donors as f64)
                .collect();
            (gaps.iter().map(|g| g * g).sum::<f64>() / 5.0).sqrt()
        };
        prop_assert!(r.pre_fit_rmse <= uniform_rmse + 1e-12);
        // adding a donor never hurts
        let fewer: Vec<usize> = (1..n_donors).collect();
        let smaller = synthetic_control_with_donors(&p, &fewer, SynthOptions::default()).unwrap();
        prop_assert!(r.pre_fit_rmse <= smaller.pre_fit_rmse + 1e-6);
    }
}

#[test]
fn event_study_recovers_per_year_effects() {
    let effects = [0.0, 0.0, 0.0, 0.0, 0.0, 0.01, 0.02, 0.015, 0.03];
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|u| {
            (0..9)
                .map(|t| 0.03 + 0.004 * u as f64 + 0.002 * (t as f64).cos() + if u == 0 { effects[t] } else { 0.0 })
                .collect()
        })
        .collect();
    let p = panel(&rows, 0, 2012);
    let es = event_study(&p, Pivot::BaseYear).unwrap();
    for (pt, e) in es.points.iter().zip(effects) {
        if pt.year.start_year() == 2012 {
            assert_eq!(pt.estimate, 0.0);
        } else {
            assert!((pt.estimate - (e - effects[5])).abs() < 1e-12, "{}", pt.year);
        }
    }
    assert!(!es.bounds_reliable);
}

#[test]
fn constant_gap_gives_zero_event_study() {
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|u| (0..8).map(|t| 0.05 + 0.01 * u as f64 + 0.003 * t as f64).collect())
        .collect();
    let p = panel(&rows, 1, 2011);
    for pivot in [Pivot::BaseYear, Pivot::PreMean] {
        let es = event_study(&p, pivot).unwrap();
        assert!(es.points.iter().all(|pt| pt.estimate.abs() < 1e-15), "{pivot:?}");
    }
}

#[test]
fn detrend_zeroes_linear_pre_period() {
    let rows = vec![
        vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.05, 0.05, 0.05],
        vec![0.04, 0.035, 0.03, 0.025, 0.02, 0.03, 0.01, 0.0],
        vec![0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02],
    ];
    let p = panel(&rows, 0, 2012);
    let (d, fit) = detrend_pre(&p).unwrap();
    assert_eq!(fit.pre_years, 5);
    assert!(!fit.variance_propagated);
    for u in 0..3 {
        for &t in d.pre() {
            assert!(d.value(u, t).abs() < 1e-15, "unit {u} year {t}");
        }
    }
    // slope 0.01 then flat: the trend keeps rising, residuals fall by 0.01 a year
    for (k, t) in (5..8).enumerate() {
        assert!((d.value(0, t) + 0.01 * (k + 1) as f64).abs() < 1e-15);
    }
}

#[test]
fn detrend_needs_three_pre_years() {
    let rows = vec![vec![0.0; 6], vec![1.0; 6]];
    let p = panel(&rows, 0, 2009);
    assert!(matches!(detrend_pre(&p), Err(DidError::InsufficientPrePeriod { have: 2, need: 3, .. })));
}

#[test]
fn student_adjust_recovers_planted_beta() {
    let fte: Vec<Vec<f64>> = (0..4)
        .map(|u| (0..8).map(|t| 10_000.0 * (1.0 + u as f64) * 1.03f64.powi(t)).collect())
        .collect();
    let rows: Vec<Vec<f64>> = fte.iter().map(|r| r.iter().map(|s| 0.01 + 0.004 * s.ln()).collect()).collect();
    let p = panel_with_fte(&rows, &fte, 0, 2012);
    let (adj, fit) = student_adjust(&p, StudentAdjustMode::Pooled).unwrap();
    assert!((fit.beta - 0.004).abs() < 1e-8);
    assert!(adj.values().iter().all(|v| (v - 0.01).abs() < 1e-8));
}

#[test]
fn student_adjust_rejects_constant_students() {
    let rows = vec![vec![0.01, 0.02, 0.03, 0.02], vec![0.02, 0.01, 0.02, 0.03]];
    let fte = vec![vec![500.0; 4], vec![500.0; 4]];
    let p = panel_with_fte(&rows, &fte, 0, 2009);
    assert!(matches!(
        student_adjust(&p, StudentAdjustMode::Pooled),
        Err(DidError::RankDeficient { .. })
    ));
}

#[test]
fn pooled_beta_lies_between_opposite_unit_slopes() {
    let fte: Vec<Vec<f64>> = (0..2).map(|_| (0..6).map(|t| 1000.0 * 1.1f64.powi(t)).collect()).collect();
    let rows = vec![
        fte[0].iter().map(|s| 0.02 + 0.01 * s.ln()).collect::<Vec<_>>(),
        fte[1].iter().map(|s| 0.5 - 0.004 * s.ln()).collect(),
    ];
    let p = panel_with_fte(&rows, &fte, 0, 2011);
    let (_, fit) = student_adjust(&p, StudentAdjustMode::PerUnit).unwrap();
    let (b0, b1) = (fit.unit_betas[0].2, fit.unit_betas[1].2);
    assert!((b0 - 0.01).abs() < 1e-8 && (b1 + 0.004).abs() < 1e-8);
    assert!(fit.beta > b1 && fit.beta < b0, "{}", fit.beta);
}

#[test]
fn implied_hire_growth_closed_forms() {
    assert_eq!(implied_hire_growth(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    let g = implied_hire_growth(&[100.0, 110.0]).unwrap();
    assert!((g[0] - 1.1f64.ln()).abs() < 1e-12);
    assert!((g[0] - 0.0953).abs() < 1e-4);
    let s: Vec<f64> = (0..5).map(|t| 200.0 * 1.02f64.powi(t)).collect();
    for v in implied_hire_growth(&s).unwrap() {
        assert!((v - 1.02f64.ln()).abs() < 1e-12);
    }
    assert!(implied_hire_growth(&[1.0]).is_err());
    assert!(matches!(implied_hire_growth(&[1.0, 0.0]), Err(DidError::NonpositiveStudentFTE { .. })));
}

/// Best simplex weights on a grid, for up to three donors.
fn grid_oracle(treated: &[f64], donors: &[Vec<f64>], steps: usize) -> (Vec<f64>, f64) {
    let sse = |w: &[f64]| -> f64 {
        treated
            .iter()
            .enumerate()
            .map(|(t, y)| (y - donors.iter().zip(w).map(|(d, w)| w * d[t]).sum::<f64>()).powi(2))
            .sum()
    };
    let mut best = (vec![], f64::INFINITY);
    for i in 0..=steps {
        let rest = if donors.len() == 3 { steps - i } else { 0 };
        for j in 0..=rest {
            let a = i as f64 / steps as f64;
            let w = if donors.len() == 3 {
                let b = j as f64 / steps as f64;
                vec![a, b, 1.0 - a - b]
            } else {
                vec![a, 1.0 - a]
            };
            let v = sse(&w);
            if v < best.1 {
                best = (w, v);
            }
        }
    }
    best
}

#[test]
fn synth_recovers_planted_combination() {
    let a = vec![0.02, 0.05, 0.03, 0.06, 0.04, 0.05, 0.05];
    let b = vec![0.06, 0.03, 0.05, 0.02, 0.07, 0.04, 0.04];
    let c = vec![0.04, 0.04, 0.08, 0.05, 0.03, 0.06, 0.02];
    let treated: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
    let p = panel(&[treated.clone(), a.clone(), b.clone(), c.clone()], 0, 2012);
    let r = synthetic_control(&p, SynthOptions::default()).unwrap();
    assert!(r.converged);
    let (oracle, _) = grid_oracle(&treated[..5], &[a, b, c], 500);
    for (k, (_, w)) in r.weights.iter().enumerate() {
        assert!((w - oracle[k]).abs() < 1e-4, "donor {k}: {w} vs {}", oracle[k]);
    }
    assert!((r.weight_of("U01").unwrap() - 0.3).abs() < 1e-4);
    assert!((r.weight_of("U02").unwrap() - 0.7).abs() < 1e-4);
}

#[test]
fn synth_outside_hull_lands_on_boundary() {
    let a = vec![0.05, 0.06, 0.055, 0.05, 0.065, 0.05];
    let b = vec![0.07, 0.06, 0.075, 0.08, 0.07, 0.07];
    let treated: Vec<f64> = a.iter().map(|v| v - 0.02).collect();
    let p = panel(&[treated.clone(), a.clone(), b.clone()], 0, 2012);
    let r = synthetic_control(&p, SynthOptions::default()).unwrap();
    let (_, oracle_sse) = grid_oracle(&treated[..5], &[a, b], 10_000);
    assert!(r.pre_fit_rmse > 0.0);
    assert_eq!(r.weight_of("U01"), Some(1.0));
    assert!(r.pre_fit_rmse.powi(2) * 5.0 <= oracle_sse + 1e-12);
}

#[test]
fn exact_donor_gets_full_weight() {
    let t = vec![0.03, 0.02, 0.04, 0.035, 0.03, 0.01];
    let other = vec![0.05, 0.06, 0.01, 0.02, 0.07, 0.03];
    let p = panel(&[t.clone(), other, t], 0, 2012);
    let r = synthetic_control(&p, SynthOptions::default()).unwrap();
    assert!((r.weight_of("U02").unwrap() - 1.0).abs() < 1e-9);
    assert!(r.pre_fit_rmse < 1e-9);
}

// With few units the two all-equal sign patterns reproduce |delta| exactly;
// 23 units make them vanishingly rare.
fn strong_effect_rows() -> Vec<Vec<f64>> {
    (0..23)
        .map(|u| {
            (0..10)
                .map(|t| 0.04 + 0.002 * u as f64 + 0.001 * t as f64 + if u == 0 && t >= 5 { 0.05 } else { 0.0 })
                .collect()
        })
        .collect()
}

#[test]
fn bootstrap_minimum_p_on_strong_effect() {
    let p = panel(&strong_effect_rows(), 0, 2012);
    let r = wild_cluster_bootstrap(&p, BootstrapOptions::new(199, 9)).unwrap();
    assert_eq!(r.p_value, 1.0 / 200.0);
    assert!(matches!(
        wild_cluster_bootstrap(&p, BootstrapOptions::new(50, 9)),
        Err(DidError::TooFewReplications(50))
    ));
}

#[test]
fn bootstrap_is_deterministic_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p = panel(&random_rows(&mut rng, 23, 15), 0, 2012);
    let opts = BootstrapOptions::new(999, 2024);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| wild_cluster_bootstrap(&p, opts).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        let other = run(threads);
        assert_eq!(one.p_value.to_bits(), other.p_value.to_bits());
        assert_eq!(one.replicate_deltas, other.replicate_deltas);
    }
    let different = wild_cluster_bootstrap(&p, BootstrapOptions::new(999, 2025)).unwrap();
    assert_ne!(one.replicate_deltas, different.replicate_deltas);
}

#[test]
fn bootstrap_p_invariant_to_outcome_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = random_rows(&mut rng, 12, 10);
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| 3.0 * v + 1.0).collect()).collect();
    let opts = BootstrapOptions::new(499, 1);
    let a = wild_cluster_bootstrap(&panel(&rows, 0, 2012), opts).unwrap();
    let b = wild_cluster_bootstrap(&panel(&scaled, 0, 2012), opts).unwrap();
    assert_eq!(a.p_value, b.p_value);
}

/// Rejection band at nominal 5%: [0.01, 0.12] widened by two binomial
/// standard errors at each end.
fn null_rejection_band(trials: usize) -> (f64, f64) {
    let se = |p: f64| (p * (1.0 - p) / trials as f64).sqrt();
    (0.01 - 2.0 * se(0.01), 0.12 + 2.0 * se(0.12))
}

fn null_p_values(level: ClusterLevel, trials: usize) -> Vec<f64> {
    (0..trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial as u64);
            let p = panel(&random_rows(&mut rng, 23, 15), 0, 2012);
            let opts = BootstrapOptions {
                cluster_level: level,
                ..BootstrapOptions::new(199, trial as u64)
            };
            wild_cluster_bootstrap(&p, opts).unwrap().p_value
        })
        .collect()
}

// One treated cluster carries almost all of the projection onto the
// treatment dummy, so unit-level sign flips can only shrink |delta*| below
// |delta_hat| up to the small donor contribution: the restricted bootstrap
// never rejects at 5%.
#[test]
fn unit_level_bootstrap_under_rejects_with_one_treated_cluster() {
    let ps = null_p_values(ClusterLevel::Unit, 500);
    let min = ps.iter().copied().fold(f64::INFINITY, f64::min);
    let rate = ps.iter().filter(|&&p| p <= 0.05).count() as f64 / ps.len() as f64;
    println!("unit-level null rejection rate at 5%: {rate:.3}, smallest p {min:.3}");
    assert_eq!(rate, 0.0);
    assert!(min > 0.1);
}

#[test]
fn observation_level_bootstrap_null_rejection_in_band() {
    let trials = 500;
    let ps = null_p_values(ClusterLevel::Observation, trials);
    let rate = ps.iter().filter(|&&p| p <= 0.05).count() as f64 / trials as f64;
    let (lo, hi) = null_rejection_band(trials);
    println!("observation-level null rejection rate at 5%: {rate:.3} (band {lo:.4}..{hi:.4})");
    assert!(rate >= lo && rate <= hi, "{rate}");
}
