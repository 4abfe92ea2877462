//! The twin regression: a classical MMR whose only moderator is the
//! learned index, refit with ordinary least-squares inference.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::linear::{
    fit_wls, interaction_name, margins, vif, Design, FitReport, LinearFit, MarginTerms, MarginsTable, PercentileGroup, VifReport,
};
use crate::report::stars;
use crate::stats::quantile;

pub const INDEX_TERM: &str = "index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinOptions {
    /// Include the index as a main effect next to `index:focal`.
    pub index_main_effect: bool,
}

impl Default for TwinOptions {
    fn default() -> Self {
        Self {
            index_main_effect: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Test,
    All,
}

impl std::fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitLabel::Train => "train",
            SplitLabel::Test => "test",
            SplitLabel::All => "all",
        })
    }
}

pub fn interaction_term(data: &PreparedData) -> String {
    interaction_name(INDEX_TERM, &data.focal_name)
}

/// Intercept, moderator columns, focal, index, `index:focal`.
pub fn build_twin_design(data: &PreparedData, index: &[f64], opts: TwinOptions) -> Result<Design> {
    let n = data.n_rows();
    if index.len() != n {
        return Err(Error::Layout(format!("index has {} values for {n} rows", index.len())));
    }
    let d = data.moderators.ncols();
    let extra = usize::from(opts.index_main_effect);
    let width = d + 3 + extra;
    let mut x = Array2::zeros((n, width));
    x.column_mut(0).fill(1.0);
    x.slice_mut(s![.., 1..=d]).assign(&data.moderators);
    for r in 0..n {
        x[[r, d + 1]] = data.focal[r];
        if opts.index_main_effect {
            x[[r, d + 2]] = index[r];
        }
        x[[r, width - 1]] = index[r] * data.focal[r];
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(data.moderator_names.iter().cloned());
    names.push(data.focal_name.clone());
    if opts.index_main_effect {
        names.push(INDEX_TERM.to_string());
    }
    names.push(interaction_term(data));
    Ok(Design::new(names, x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinReport {
    pub fit: LinearFit,
    pub p_int: f64,
    pub vif: VifReport,
    pub split: SplitLabel,
}

impl TwinReport {
    /// Coefficient of the `index:focal` term.
    pub fn c_int(&self) -> f64 {
        let j = self.fit.term_names.len() - 1;
        self.fit.coef[j]
    }

    pub fn to_json(&self) -> TwinReportJson {
        TwinReportJson {
            split: self.split,
            p_int: self.p_int,
            c_int: self.c_int(),
            fit: self.fit.report(),
            vif: self.vif.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinReportJson {
    pub split: SplitLabel,
    pub p_int: f64,
    pub c_int: f64,
    pub fit: FitReport,
    pub vif: VifReport,
}

/// VIF over every column but the intercept.
pub fn design_vif(design: &Design) -> Result<VifReport> {
    let x = design.x.slice(s![.., 1..]);
    vif(x, &design.names[1..], true)
}

pub fn evaluate_twin(data: &PreparedData, index: &[f64], split: SplitLabel, opts: TwinOptions) -> Result<TwinReport> {
    let design = build_twin_design(data, index, opts)?;
    let fit = fit_wls(&design, &data.outcome, &data.weights)?;
    let vif = design_vif(&design)?;
    let p_int = *fit.p_value.last().expect("interaction term present");
    Ok(TwinReport {
        fit,
        p_int,
        vif,
        split,
    })
}

/// Evenly spaced focal values between the 5th and 95th percentile.
pub fn focal_grid(data: &PreparedData, points: usize) -> Result<Vec<f64>> {
    if points < 1 {
        return Err(Error::Config("margins needs at least one grid point".into()));
    }
    let mut sorted = data.focal.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&sorted, 0.05), quantile(&sorted, 0.95));
    if points == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Twin-model margins over [`focal_grid`] on the standardized scale.
pub fn twin_margins(
    data: &PreparedData,
    index: &[f64],
    opts: TwinOptions,
    points: usize,
    groups: &[PercentileGroup],
) -> Result<MarginsTable> {
    if !opts.index_main_effect {
        return Err(Error::Config("margins needs the index main effect in the twin model".into()));
    }
    let design = build_twin_design(data, index, opts)?;
    let fit = fit_wls(&design, &data.outcome, &data.weights)?;
    let grid = focal_grid(data, points)?;
    let interaction = interaction_term(data);
    let terms = MarginTerms {
        index: INDEX_TERM,
        focal: &data.focal_name,
        interaction: &interaction,
    };
    margins(&fit, &design, &data.weights, terms, &grid, groups)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedTerm {
    pub term: String,
    pub coef: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub model: String,
    pub terms: Vec<ComparedTerm>,
    pub r2: f64,
    pub adj_r2: f64,
    #[serde(with = "crate::report::serde_inf")]
    pub max_vif: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDelta {
    pub term: String,
    pub full: f64,
    pub twin: f64,
    pub delta: f64,
}

/// Side-by-side view of the full MMR and the twin model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub full: ModelColumn,
    pub twin: ModelColumn,
    /// Coefficient differences for terms present in both models.
    pub shared: Vec<TermDelta>,
}

fn column(model: &str, fit: &LinearFit, max_vif: f64) -> ModelColumn {
    ModelColumn {
        model: model.to_string(),
        terms: (0..fit.coef.len())
            .map(|j| ComparedTerm {
                term: fit.term_names[j].clone(),
                coef: fit.coef[j],
                ci_low: fit.ci_low[j],
                ci_high: fit.ci_high[j],
                p: fit.p_value[j],
                stars: stars(fit.p_value[j]).to_string(),
            })
            .collect(),
        r2: fit.r2,
        adj_r2: fit.adj_r2,
        max_vif,
    }
}

pub fn compare(full: &LinearFit, full_vif: &VifReport, twin: &TwinReport) -> Comparison {
    let shared = full
        .term_names
        .iter()
        .enumerate()
        .filter_map(|(j, name)| {
            twin.fit.position(name).map(|k| TermDelta {
                term: name.clone(),
                full: full.coef[j],
                twin: twin.fit.coef[k],
                delta: twin.fit.coef[k] - full.coef[j],
            })
        })
        .collect();
    Comparison {
        full: column("full_mmr", full, full_vif.max_vif),
        twin: column("twin", &twin.fit, twin.vif.max_vif),
        shared,
    }
}

impl Comparison {
    /// CSV with one row per (model, term).
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, comment: &str) -> Result<()> {
        writeln!(out, "# {comment}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "term", "coef", "ci_low", "ci_high", "p", "stars"])?;
        for col in [&self.full, &self.twin] {
            for t in &col.terms {
                w.write_record([
                    col.model.clone(),
                    t.term.clone(),
                    format!("{:?}", t.coef),
                    format!("{:?}", t.ci_low),
                    format!("{:?}", t.ci_high),
                    format!("{:?}", t.p),
                    t.stars.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn prepared(n: usize) -> PreparedData {
        let moderators = Array2::from_shape_fn((n, 2), |(r, c)| ((r * (c + 3)) as f64 * 0.71).sin());
        PreparedData {
            outcome_name: "y".into(),
            focal_name: "xf".into(),
            outcome: (0..n).map(|r| (r as f64 * 0.3).cos()).collect(),
            focal: (0..n).map(|r| (r as f64 * 1.7).sin()).collect(),
            moderators,
            moderator_names: vec!["m1".into(), "m2".into()],
            features: vec![],
            weights: vec![1.0; n],
        }
    }

    #[test]
    fn design_width_and_product() {
        let data = prepared(2);
        let d = build_twin_design(&data, &[0.5, -2.0], TwinOptions::default()).unwrap();
        assert_eq!(d.n_terms(), 2 + 4);
        assert_eq!(d.names.last().unwrap(), "index:xf");
        for r in 0..2 {
            assert_eq!(d.x[[r, 5]], d.x[[r, 4]] * data.focal[r]);
        }
        let no_main = build_twin_design(&data, &[0.5, -2.0], TwinOptions { index_main_effect: false }).unwrap();
        assert_eq!(no_main.n_terms(), 5);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            build_twin_design(&prepared(3), &[1.0], TwinOptions::default()),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn zero_index_is_collinear() {
        let data = prepared(40);
        let err = evaluate_twin(&data, &[0.0; 40], SplitLabel::Train, TwinOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Collinearity { .. }));
    }

    #[test]
    fn p_int_is_last_p_value() {
        let data = prepared(60);
        let index: Vec<f64> = (0..60).map(|r| (r as f64 * 0.13).cos()).collect();
        let rep = evaluate_twin(&data, &index, SplitLabel::Test, TwinOptions::default()).unwrap();
        assert_eq!(rep.p_int, *rep.fit.p_value.last().unwrap());
        let json = serde_json::to_string(&rep.to_json()).unwrap();
        assert!(json.contains("\"split\":\"test\""));
    }

    #[test]
    fn compare_with_itself_has_zero_deltas() {
        let data = prepared(60);
        let index: Vec<f64> = (0..60).map(|r| (r as f64 * 0.13).cos()).collect();
        let rep = evaluate_twin(&data, &index, SplitLabel::All, TwinOptions::default()).unwrap();
        let cmp = compare(&rep.fit, &rep.vif, &rep);
        assert_eq!(cmp.shared.len(), rep.fit.coef.len());
        assert!(cmp.shared.iter().all(|t| t.delta == 0.0));
        assert_eq!(cmp.full.max_vif, cmp.twin.max_vif);
    }
}
