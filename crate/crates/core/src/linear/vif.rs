use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::qr;
use crate::error::{Error, Result};

/// Variance inflation factors for each predictor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub names: Vec<String>,
    /// `+inf` marks a predictor that is an exact combination of the others.
    #[serde(with = "crate::report::serde_inf_vec")]
    pub vif: Vec<f64>,
    #[serde(with = "crate::report::serde_inf")]
    pub max_vif: f64,
    pub centered: bool,
}

/// VIF of each column of `x` (no intercept column).
///
/// Centered VIFs measure R² about the mean after mean-centering each
/// column; uncentered VIFs regress through the origin on raw columns.
pub fn vif(x: ArrayView2<f64>, names: &[String], center: bool) -> Result<VifReport> {
    let p = x.ncols();
    if p < 2 {
        return Err(Error::Domain("VIF needs at least two predictors".into()));
    }
    if names.len() != p {
        return Err(Error::Layout("one name per predictor required".into()));
    }
    let mut data: Array2<f64> = x.to_owned();
    if center {
        let means = data.mean_axis(Axis(0)).expect("nonempty");
        data -= &means;
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let target = data.column(j).to_vec();
        let ss: f64 = target.iter().map(|v| v * v).sum();
        if !(ss > 0.0) {
            return Err(Error::DegenerateColumn(names[j].clone()));
        }
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let a = data.select(Axis(1), &others);
        let ls = qr::least_squares(a.view(), &target);
        let resid_frac = ls.rss / ss;
        // Residual fraction at rounding level means an exact linear combination.
        let v = if resid_frac < 1e-20 {
            f64::INFINITY
        } else {
            1.0 / resid_frac
        };
        out.push(v);
    }
    let max_vif = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(VifReport {
        names: names.to_vec(),
        vif: out,
        max_vif,
        centered: center,
    })
}
