#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regnn::data::{FeatureGroup, FeatureKind, PreparedData};
use regnn::linear::Design;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Normal-equations WLS with weights rescaled to sum to n.
pub struct Oracle {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn wls_oracle(x: &Array2<f64>, y: &[f64], w: &[f64]) -> Oracle {
    let (n, k) = x.dim();
    let scale = n as f64 / w.iter().sum::<f64>();
    let xm = DMatrix::from_fn(n, k, |r, c| x[[r, c]]);
    let wm = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|v| v * scale)));
    let yv = DVector::from_column_slice(y);
    let xtwx = xm.transpose() * &wm * &xm;
    let inv = xtwx.clone().try_inverse().expect("invertible");
    let beta = &inv * xm.transpose() * &wm * &yv;
    let resid = &yv - &xm * &beta;
    let dof = (n - k) as f64;
    let s2 = (resid.transpose() * &wm * &resid)[(0, 0)] / dof;
    let t = StudentsT::new(0.0, 1.0, dof).unwrap();
    let se: Vec<f64> = (0..k).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    let p = (0..k).map(|j| 2.0 * (1.0 - t.cdf((beta[j] / se[j]).abs()))).collect();
    Oracle {
        coef: beta.iter().copied().collect(),
        se,
        p,
    }
}

/// Random design with an intercept column, outcome and positive weights.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Design, Vec<f64>, Vec<f64>) {
    let x = Array2::from_shape_fn((n, k), |(_, c)| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n)
        .map(|r| (0..k).map(|c| x[[r, c]] * beta[c]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let names = (0..k).map(|j| if j == 0 { "intercept".into() } else { format!("x{j}") }).collect();
    (Design::new(names, x), y, w)
}

/// Standard-normal prepared data with continuous moderators `m1..md`.
pub fn gaussian_prepared(n: usize, d: usize, seed: u64) -> PreparedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moderators = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let focal: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let outcome = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let names: Vec<String> = (1..=d).map(|k| format!("m{k}")).collect();
    PreparedData {
        outcome_name: "y".into(),
        focal_name: "xf".into(),
        outcome,
        focal,
        moderators,
        features: names
            .iter()
            .enumerate()
            .map(|(c, name)| FeatureGroup {
                name: name.clone(),
                kind: FeatureKind::Continuous { column: c },
            })
            .collect(),
        moderator_names: names,
        weights: vec![1.0; n],
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

use regnn::model::{Batch, RegnnGrads, RegnnModel};
use regnn::neural::{EnsembleModel, ForwardMode};

/// Every scalar parameter of a composite model, in a fixed order.
pub fn param_mut(model: &mut RegnnModel) -> Vec<&mut f64> {
    let mut out: Vec<&mut f64> = vec![&mut model.c0];
    out.extend(model.c_lin.iter_mut());
    out.push(&mut model.c_focal);
    out.push(&mut model.c_int);
    for m in &mut model.ensemble.members {
        for l in &mut m.layers {
            out.extend(l.weight.iter_mut());
            out.extend(l.bias.iter_mut());
        }
    }
    out
}

/// Gradient flattened in the order of [`param_mut`].
pub fn flatten_grads(g: &RegnnGrads) -> Vec<f64> {
    let mut out = vec![g.c0];
    out.extend(&g.c_lin);
    out.push(g.c_focal);
    out.push(g.c_int);
    for m in &g.members {
        for l in &m.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
    }
    out
}

/// Random composite model at a generic parameter point.
pub fn random_model(seed: u64, d: usize) -> RegnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut m = RegnnModel::new(
        EnsembleModel::init(seed, d).unwrap(),
        (1..=d).map(|k| format!("m{k}")).collect(),
        "xf".into(),
        String::new(),
    );
    m.c0 = rng.random_range(-1.0..1.0);
    for c in &mut m.c_lin {
        *c = rng.random_range(-1.0..1.0);
    }
    m.c_focal = rng.random_range(-1.0..1.0);
    m.c_int = rng.random_range(0.5..1.5);
    for member in &mut m.ensemble.members {
        for l in &mut member.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }
    m.ensemble.batchnorm.running_mean = 0.1;
    m.ensemble.batchnorm.running_var = 0.8;
    m
}

/// Worst relative error between analytic and central-difference gradients.
/// Differences below `abs_floor` in absolute terms count as exact.
pub fn gradient_check(model: &RegnnModel, batch: Batch<'_>, mode: ForwardMode, h: f64, abs_floor: f64) -> (f64, usize) {
    let (_, grads, _) = model.loss_and_gradients(batch, mode).unwrap();
    let analytic = flatten_grads(&grads);
    let mut probe = model.clone();
    let n_params = param_mut(&mut probe).len();
    assert_eq!(n_params, analytic.len());
    let mut worst = 0.0f64;
    for i in 0..n_params {
        let base = *param_mut(&mut probe)[i];
        *param_mut(&mut probe)[i] = base + h;
        let up = probe.loss_and_gradients(batch, mode).unwrap().0;
        *param_mut(&mut probe)[i] = base - h;
        let down = probe.loss_and_gradients(batch, mode).unwrap().0;
        *param_mut(&mut probe)[i] = base;
        let numeric = (up - down) / (2.0 * h);
        let diff = (numeric - analytic[i]).abs();
        if diff > abs_floor {
            worst = worst.max(diff / numeric.abs().max(analytic[i].abs()));
        }
    }
    (worst, n_params)
}
