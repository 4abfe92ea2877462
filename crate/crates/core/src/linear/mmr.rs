use ndarray::Array2;

use super::{fit_wls, Design, LinearFit};
use crate::data::PreparedData;
use crate::error::Result;

/// Name of the product term between `a` and `b`.
pub fn interaction_name(a: &str, b: &str) -> String {
    format!("{a}:{b}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmrOptions {
    /// Mean-center both factors before forming each product column.
    pub center: bool,
}

impl Default for MmrOptions {
    fn default() -> Self {
        Self { center: true }
    }
}

/// Intercept, every moderator column, the focal predictor, then one
/// moderator-by-focal product per moderator column.
pub fn build_full_mmr_design(data: &PreparedData, opts: MmrOptions) -> Design {
    let n = data.n_rows();
    let d = data.moderators.ncols();
    let mean = |v: &mut dyn Iterator<Item = f64>| -> f64 {
        if opts.center {
            v.sum::<f64>() / n as f64
        } else {
            0.0
        }
    };
    let focal_mean = mean(&mut data.focal.iter().copied());
    let mod_means: Vec<f64> = (0..d)
        .map(|j| mean(&mut data.moderators.column(j).iter().copied()))
        .collect();

    let width = 2 + 2 * d;
    let mut x = Array2::zeros((n, width));
    for r in 0..n {
        x[[r, 0]] = 1.0;
        let f = data.focal[r];
        for j in 0..d {
            let m = data.moderators[[r, j]];
            x[[r, 1 + j]] = m;
            x[[r, 2 + d + j]] = (m - mod_means[j]) * (f - focal_mean);
        }
        x[[r, 1 + d]] = f;
    }
    let mut names = Vec::with_capacity(width);
    names.push("intercept".to_string());
    names.extend(data.moderator_names.iter().cloned());
    names.push(data.focal_name.clone());
    names.extend(
        data.moderator_names
            .iter()
            .map(|m| interaction_name(m, &data.focal_name)),
    );
    Design::new(names, x)
}

/// Classical moderated multiple regression with every moderator interacted
/// with the focal predictor.
pub fn fit_full_mmr(data: &PreparedData, opts: MmrOptions) -> Result<LinearFit> {
    let design = build_full_mmr_design(data, opts);
    fit_wls(&design, &data.outcome, &data.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulated(n: usize, a: f64, seed: u64) -> PreparedData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let moderators = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let focal: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let outcome = (0..n)
            .map(|r| focal[r] + a * moderators[[r, 0]] * focal[r] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        PreparedData {
            outcome_name: "y".into(),
            focal_name: "xf".into(),
            outcome,
            focal,
            moderators,
            moderator_names: vec!["m1".into(), "m2".into(), "m3".into()],
            features: vec![],
            weights: vec![1.0; n],
        }
    }

    #[test]
    fn design_counts_terms() {
        let d = build_full_mmr_design(&simulated(20, 0.0, 1), MmrOptions::default());
        assert_eq!(d.n_terms(), 1 + 3 + 1 + 3);
        assert_eq!(d.names[5], "m1:xf");
    }

    #[test]
    fn products_use_centered_factors() {
        let data = simulated(100, 0.0, 2);
        let d = build_full_mmr_design(&data, MmrOptions::default());
        let raw = build_full_mmr_design(&data, MmrOptions { center: false });
        for r in 0..100 {
            assert_eq!(raw.x[[r, 5]], data.moderators[[r, 0]] * data.focal[r]);
        }
        let f_mean = data.focal.iter().sum::<f64>() / 100.0;
        let m_mean = data.moderators.column(0).sum() / 100.0;
        for r in 0..100 {
            let want = (data.moderators[[r, 0]] - m_mean) * (data.focal[r] - f_mean);
            assert!((d.x[[r, 5]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn recovers_known_interaction() {
        let fit = fit_full_mmr(&simulated(2000, 2.0, 3), MmrOptions::default()).unwrap();
        let j = fit.position("m1:xf").unwrap();
        assert!((fit.coef[j] - 2.0).abs() < 0.05);
        assert!(fit.p_value[j] < 0.001);
    }
}
