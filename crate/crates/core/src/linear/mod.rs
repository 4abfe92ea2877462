//! Weighted least squares with classical inference, VIF diagnostics,
//! moderated-regression designs and margins tables.

pub mod dist;
mod margins;
mod mmr;
pub mod qr;
mod vif;

pub use margins::{margins, MarginTerms, MarginsGroup, MarginsRow, MarginsTable, PercentileGroup};
pub use mmr::{build_full_mmr_design, fit_full_mmr, interaction_name, MmrOptions};
pub use vif::{vif, VifReport};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence level for all reported intervals.
pub const CONFIDENCE: f64 = 0.95;

/// Named design matrix. The first column is conventionally the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: Array2<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, x: Array2<f64>) -> Self {
        assert_eq!(names.len(), x.ncols(), "one name per column");
        Self { names, x }
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.x.ncols()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Result of a weighted least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub term_names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: Array2<f64>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub dof: usize,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
    pub weighted: bool,
    /// Residual variance with weights rescaled to sum to `n`.
    pub sigma2: f64,
    /// Two-sided critical value used for the intervals.
    pub t_crit: f64,
}

impl LinearFit {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.term_names.iter().position(|n| n == name)
    }

    /// Linear predictor and its standard error at covariate vector `x`.
    pub fn predict_with_se(&self, x: ArrayView1<f64>) -> (f64, f64) {
        let mean = x.iter().zip(&self.coef).map(|(a, b)| a * b).sum();
        let var = x.dot(&self.cov.dot(&x));
        (mean, var.max(0.0).sqrt())
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            terms: (0..self.coef.len())
                .map(|j| TermRow {
                    term: self.term_names[j].clone(),
                    coef: self.coef[j],
                    se: self.se[j],
                    t: self.t_stat[j],
                    p: self.p_value[j],
                    ci_low: self.ci_low[j],
                    ci_high: self.ci_high[j],
                })
                .collect(),
            r2: self.r2,
            adj_r2: self.adj_r2,
            n: self.n,
            dof: self.dof,
            weighted: self.weighted,
        }
    }
}

/// Serializable coefficient table with fit footer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub terms: Vec<TermRow>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
    pub dof: usize,
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub term: String,
    pub coef: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Fits `y ~ X` by weighted least squares with analytic weights.
///
/// Weights are rescaled to sum to the number of positively weighted rows,
/// so inference is invariant to their overall scale. The covariance is the
/// classical model-based `s^2 (X'WX)^{-1}`.
pub fn fit_wls(design: &Design, y: &[f64], w: &[f64]) -> Result<LinearFit> {
    let (rows, p) = design.x.dim();
    if y.len() != rows || w.len() != rows {
        return Err(Error::Layout(format!(
            "design has {rows} rows, outcome {} and weights {}",
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let n = w.iter().filter(|&&v| v > 0.0).count();
    if n <= p {
        return Err(Error::Underdetermined { n, terms: p });
    }
    let scale = n as f64 / total;
    let sw: Vec<f64> = w.iter().map(|&v| (v * scale).sqrt()).collect();

    let mut xw = design.x.clone();
    for (mut row, &s) in xw.rows_mut().into_iter().zip(&sw) {
        row *= s;
    }
    let yw: Vec<f64> = y.iter().zip(&sw).map(|(a, s)| a * s).collect();

    let ls = qr::least_squares(xw.view(), &yw);
    if let Some(&j) = ls.dependent.first() {
        return Err(Error::Collinearity {
            column: design.names[j].clone(),
        });
    }
    let dof = n - p;
    let sigma2 = ls.rss / dof as f64;
    let cov = ls.gram_inverse() * sigma2;
    let se: Vec<f64> = (0..p).map(|j| cov[[j, j]].max(0.0).sqrt()).collect();
    let t_stat: Vec<f64> = ls
        .coef
        .iter()
        .zip(&se)
        .map(|(&c, &s)| {
            if s > 0.0 {
                c / s
            } else if c == 0.0 {
                0.0
            } else {
                c.signum() * f64::INFINITY
            }
        })
        .collect();
    let p_value = t_stat
        .iter()
        .map(|&t| dist::student_p(t, dof as f64))
        .collect::<Result<Vec<_>>>()?;
    let t_crit = dist::student_critical(1.0 - CONFIDENCE, dof as f64)?;
    let ci_low = ls.coef.iter().zip(&se).map(|(c, s)| c - t_crit * s).collect();
    let ci_high = ls.coef.iter().zip(&se).map(|(c, s)| c + t_crit * s).collect();

    let wsum: f64 = sw.iter().map(|s| s * s).sum();
    let ybar = yw.iter().zip(&sw).map(|(a, s)| a * s).sum::<f64>() / wsum;
    let tss: f64 = y
        .iter()
        .zip(&sw)
        .map(|(a, s)| s * s * (a - ybar).powi(2))
        .sum();
    let r2 = if tss > 0.0 { 1.0 - ls.rss / tss } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof as f64;

    Ok(LinearFit {
        term_names: design.names.clone(),
        coef: ls.coef,
        cov,
        se,
        t_stat,
        p_value,
        ci_low,
        ci_high,
        dof,
        r2,
        adj_r2,
        n,
        weighted: w.iter().any(|&v| v != w[0]),
        sigma2,
        t_crit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn exact_line_has_zero_residual() {
        let d = Design::new(names(2), array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]);
        let fit = fit_wls(&d, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12 && (fit.coef[1] - 1.0).abs() < 1e-12);
        assert!(fit.sigma2 < 1e-25);
        assert_eq!(fit.r2, 1.0);
        assert_eq!(fit.dof, 2);
    }

    #[test]
    fn duplicated_column_is_collinear() {
        let d = Design::new(
            vec!["1".into(), "a".into(), "a_copy".into()],
            array![[1.0, 0.3, 0.3], [1.0, 1.0, 1.0], [1.0, 2.5, 2.5], [1.0, 3.0, 3.0], [1.0, -1.0, -1.0]],
        );
        let err = fit_wls(&d, &[1.0, 2.0, 3.0, 4.0, 0.0], &[1.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Collinearity { ref column } if column == "a_copy"));
    }

    #[test]
    fn underdetermined_rejected() {
        let d = Design::new(names(2), array![[1.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            fit_wls(&d, &[1.0, 2.0], &[1.0, 1.0]),
            Err(Error::Underdetermined { n: 2, terms: 2 })
        ));
    }

    #[test]
    fn zero_weights_rejected() {
        let d = Design::new(names(1), array![[1.0], [1.0], [1.0]]);
        assert!(matches!(
            fit_wls(&d, &[1.0, 2.0, 3.0], &[0.0; 3]),
            Err(Error::DegenerateWeights)
        ));
    }

    #[test]
    fn intervals_bracket_and_adjusted_is_smaller() {
        let d = Design::new(
            names(2),
            array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0], [1.0, 5.0]],
        );
        let fit = fit_wls(&d, &[0.1, 1.3, 1.8, 3.4, 3.9, 5.2], &[1.0, 2.0, 1.0, 0.5, 1.0, 3.0]).unwrap();
        for j in 0..2 {
            assert!(fit.ci_low[j] < fit.coef[j] && fit.coef[j] < fit.ci_high[j]);
            assert!((0.0..=1.0).contains(&fit.p_value[j]));
        }
        assert!(fit.adj_r2 <= fit.r2);
        assert!(fit.weighted);
    }
}
