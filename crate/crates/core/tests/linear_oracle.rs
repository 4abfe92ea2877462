mod common;

use approx::assert_abs_diff_eq;
use common::{random_problem, wls_oracle};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regnn::linear::dist::{normal_cdf, student_p};
use regnn::linear::{fit_wls, vif, Design};
use regnn::Error;

#[test]
fn exact_line() {
    let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
    let design = Design::new(vec!["intercept".into(), "x".into()], x);
    let fit = fit_wls(&design, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).unwrap();
    assert_abs_diff_eq!(fit.coef[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fit.coef[1], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
}

#[test]
fn matches_normal_equations_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let k = 2 + case % 8;
        let n = 20 + 3 * case;
        let (design, y, w) = random_problem(&mut rng, n, k);
        let fit = fit_wls(&design, &y, &w).unwrap();
        let oracle = wls_oracle(&design.x, &y, &w);
        for j in 0..k {
            assert_abs_diff_eq!(fit.coef[j], oracle.coef[j], epsilon = 1e-8);
            assert_abs_diff_eq!(fit.se[j], oracle.se[j], epsilon = 1e-8);
            assert_abs_diff_eq!(fit.p_value[j], oracle.p[j], epsilon = 1e-6);
            assert!(fit.ci_low[j] < fit.coef[j] && fit.coef[j] < fit.ci_high[j]);
        }
        assert!(fit.adj_r2 <= fit.r2);
        assert_eq!(fit.dof, n - k);
    }
}

#[test]
fn unit_weights_are_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (design, y, _) = random_problem(&mut rng, 50, 4);
    let fit = fit_wls(&design, &y, &[1.0; 50]).unwrap();
    let oracle = wls_oracle(&design.x, &y, &[1.0; 50]);
    for j in 0..4 {
        assert_abs_diff_eq!(fit.coef[j], oracle.coef[j], epsilon = 1e-8);
    }
}

#[test]
fn duplicated_column_is_named() {
    let x = array![[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 3.0, 3.0], [1.0, 5.0, 5.0]];
    let design = Design::new(vec!["intercept".into(), "a".into(), "b".into()], x);
    let err = fit_wls(&design, &[1.0, 2.0, 2.5, 4.0], &[1.0; 4]).unwrap_err();
    assert!(matches!(err, Error::Collinearity { ref column } if column == "b"));
}

#[test]
fn too_few_rows() {
    let design = Design::new(vec!["intercept".into(), "a".into()], array![[1.0, 0.0], [1.0, 1.0]]);
    assert!(matches!(fit_wls(&design, &[0.0, 1.0], &[1.0; 2]), Err(Error::Underdetermined { .. })));
}

#[test]
fn student_p_normal_limit() {
    let p = student_p(1.96, 1e6).unwrap();
    let want = 2.0 * (1.0 - normal_cdf(1.96));
    assert!((p - 0.05).abs() < 5e-4);
    assert!((p - want).abs() < 1e-5);
}

/// Two-sided tail by Simpson integration of the t density.
fn integrated_tail(t: f64, dof: f64) -> f64 {
    let ln_c = libm::lgamma((dof + 1.0) / 2.0) - libm::lgamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln();
    let dens = |x: f64| (ln_c - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln()).exp();
    let steps = 20_000;
    let h = t / steps as f64;
    let mut s = dens(0.0) + dens(t);
    for i in 1..steps {
        s += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn student_p_matches_integrated_density() {
    let p = student_p(2.228, 10.0).unwrap();
    assert!((p - 0.05).abs() < 1e-3);
    for (t, dof) in [(2.228, 10.0), (0.7, 3.0), (3.5, 25.0), (1.2, 1.0)] {
        assert!((student_p(t, dof).unwrap() - integrated_tail(t, dof)).abs() < 1e-10);
    }
}

#[test]
fn vif_closed_forms() {
    let orth = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let rep = vif(orth.view(), &["a".into(), "b".into()], true).unwrap();
    assert!(rep.vif.iter().all(|v| (v - 1.0).abs() < 1e-6));

    // a pair engineered to sample correlation exactly 0.6
    let n = 400;
    let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).sin()).collect();
    let v: Vec<f64> = (0..n).map(|i| (i as f64 * 1.37).cos()).collect();
    let (u, v) = orthonormalize(&u, &v);
    let x = Array2::from_shape_fn((n, 2), |(r, c)| if c == 0 { u[r] } else { 0.6 * u[r] + 0.8 * v[r] });
    let rep = vif(x.view(), &["a".into(), "b".into()], true).unwrap();
    for v in &rep.vif {
        assert!((v - 1.5625).abs() < 1e-6);
    }

    let dup = Array2::from_shape_fn((10, 2), |(r, c)| (r as f64 + 1.0) * (c as f64 + 1.0));
    let rep = vif(dup.view(), &["x".into(), "2x".into()], true).unwrap();
    assert!(rep.max_vif.is_infinite());
    assert!(serde_json::to_string(&rep).unwrap().contains("\"inf\""));
}

fn orthonormalize(u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let center = |a: &[f64]| {
        let m = a.iter().sum::<f64>() / a.len() as f64;
        a.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let u = center(u);
    let nu = dot(&u, &u).sqrt();
    let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let v = center(v);
    let proj = dot(&u, &v);
    let v: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - proj * b).collect();
    let nv = dot(&v, &v).sqrt();
    (u, v.iter().map(|x| x / nv).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_scale_invariance(seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (design, y, w) = random_problem(&mut rng, 40, 4);
        let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let a = fit_wls(&design, &y, &w).unwrap();
        let b = fit_wls(&design, &y, &scaled).unwrap();
        for j in 0..4 {
            prop_assert!((a.coef[j] - b.coef[j]).abs() < 1e-9);
            prop_assert!((a.se[j] - b.se[j]).abs() < 1e-9);
            prop_assert!((a.t_stat[j] - b.t_stat[j]).abs() < 1e-7);
            prop_assert!((a.p_value[j] - b.p_value[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn student_p_is_monotone(t in 0.0f64..40.0, dt in 1e-3f64..5.0, dof in 1u32..500) {
        let dof = f64::from(dof);
        let a = student_p(t, dof).unwrap();
        let b = student_p(t + dt, dof).unwrap();
        prop_assert!(b <= a);
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert_eq!(student_p(-t, dof).unwrap(), a);
    }

    #[test]
    fn adj_r2_below_r2(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (design, y, w) = random_problem(&mut rng, 30, 5);
        let fit = fit_wls(&design, &y, &w).unwrap();
        prop_assert!(fit.adj_r2 <= fit.r2);
        for j in 0..5 {
            prop_assert!((fit.cov[[j, j]].sqrt() - fit.se[j]).abs() < 1e-14);
            for k in 0..5 {
                prop_assert!((fit.cov[[j, k]] - fit.cov[[k, j]]).abs() < 1e-14);
            }
        }
    }
}
