use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{Design, LinearFit};
use crate::error::{Error, Result};
use crate::stats::quantile;

/// A group of rows defined by a sample percentile of the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileGroup {
    pub label: String,
    /// In percent, 0..=100.
    pub percentile: f64,
}

impl PercentileGroup {
    pub fn defaults() -> Vec<PercentileGroup> {
        [("low", 10.0), ("median", 50.0), ("high", 90.0)]
            .into_iter()
            .map(|(label, percentile)| PercentileGroup {
                label: label.into(),
                percentile,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsRow {
    pub focal_value: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsGroup {
    pub label: String,
    pub percentile: f64,
    pub index_value: f64,
    pub rows: Vec<MarginsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsTable {
    pub focal_grid: Vec<f64>,
    pub groups: Vec<MarginsGroup>,
}

impl MarginsTable {
    pub fn n_rows(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len()).sum()
    }

    /// Applies affine maps to the focal axis and the predicted outcome,
    /// e.g. to undo standardization before display.
    pub fn rescaled(&self, focal: impl Fn(f64) -> f64, outcome_mean: f64, outcome_sd: f64) -> Self {
        let map_y = |v: f64| outcome_mean + outcome_sd * v;
        MarginsTable {
            focal_grid: self.focal_grid.iter().map(|&v| focal(v)).collect(),
            groups: self
                .groups
                .iter()
                .map(|g| MarginsGroup {
                    rows: g
                        .rows
                        .iter()
                        .map(|r| MarginsRow {
                            focal_value: focal(r.focal_value),
                            mean: map_y(r.mean),
                            ci_low: map_y(r.ci_low),
                            ci_high: map_y(r.ci_high),
                        })
                        .collect(),
                    ..g.clone()
                })
                .collect(),
        }
    }

    /// CSV with columns `group,focal_value,mean,ci_low,ci_high`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, comment: &str) -> Result<()> {
        writeln!(out, "# {comment}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "focal_value", "mean", "ci_low", "ci_high"])?;
        for g in &self.groups {
            for r in &g.rows {
                w.write_record([
                    g.label.clone(),
                    format!("{:?}", r.focal_value),
                    format!("{:?}", r.mean),
                    format!("{:?}", r.ci_low),
                    format!("{:?}", r.ci_high),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Names of the three terms margins manipulates.
#[derive(Debug, Clone, Copy)]
pub struct MarginTerms<'a> {
    pub index: &'a str,
    pub focal: &'a str,
    pub interaction: &'a str,
}

/// Predicted outcome over a focal grid for low / median / high index groups.
///
/// The index is fixed at each group's sample percentile, the interaction at
/// `index * focal`, and every other term at its weighted mean. Intervals use
/// the delta method on `fit.cov`.
pub fn margins(
    fit: &LinearFit,
    design: &Design,
    weights: &[f64],
    terms: MarginTerms<'_>,
    focal_grid: &[f64],
    groups: &[PercentileGroup],
) -> Result<MarginsTable> {
    if focal_grid.is_empty() {
        return Err(Error::Config("margins focal grid is empty".into()));
    }
    let locate = |name: &str| {
        fit.position(name)
            .filter(|&j| design.names.get(j).map(String::as_str) == Some(name))
            .ok_or_else(|| Error::Layout(format!("fit has no term `{name}`")))
    };
    let (ji, jf, jx) = (locate(terms.index)?, locate(terms.focal)?, locate(terms.interaction)?);

    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let means: Array1<f64> = (0..design.n_terms())
        .map(|j| {
            design
                .x
                .column(j)
                .iter()
                .zip(weights)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                / wsum
        })
        .collect();

    let mut sorted = design.x.column(ji).to_vec();
    sorted.sort_by(f64::total_cmp);

    let groups = groups
        .iter()
        .map(|g| {
            let index_value = quantile(&sorted, g.percentile / 100.0);
            let rows = focal_grid
                .iter()
                .map(|&f| {
                    let mut x = means.clone();
                    x[ji] = index_value;
                    x[jf] = f;
                    x[jx] = index_value * f;
                    let (mean, se) = fit.predict_with_se(x.view());
                    MarginsRow {
                        focal_value: f,
                        mean,
                        ci_low: mean - fit.t_crit * se,
                        ci_high: mean + fit.t_crit * se,
                    }
                })
                .collect();
            MarginsGroup {
                label: g.label.clone(),
                percentile: g.percentile,
                index_value,
                rows,
            }
        })
        .collect();
    Ok(MarginsTable {
        focal_grid: focal_grid.to_vec(),
        groups,
    })
}
