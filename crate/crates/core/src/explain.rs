//! Partial dependence and accumulated local effects of the learned index.
//!
//! Everything here probes the frozen summarizer `f(M)` alone, never the
//! composite outcome prediction.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureGroup, FeatureKind, PreparedData};
use crate::error::{Error, Result};
use crate::model::RegnnModel;
use crate::neural::EnsembleModel;
use crate::stats::quantile;

pub const DEFAULT_GRID: usize = 20;
pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_SAMPLES: usize = 1000;

/// Anything mapping moderator rows to one index value per row.
pub trait Summarizer: Sync {
    fn index(&self, rows: ArrayView2<f64>) -> Result<Vec<f64>>;
}

impl Summarizer for EnsembleModel {
    fn index(&self, rows: ArrayView2<f64>) -> Result<Vec<f64>> {
        EnsembleModel::index(self, rows)
    }
}

impl Summarizer for RegnnModel {
    fn index(&self, rows: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.ensemble.index(rows)
    }
}

impl<F> Summarizer for F
where
    F: Fn(ArrayView2<f64>) -> Vec<f64> + Sync,
{
    fn index(&self, rows: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self(rows))
    }
}

/// A value a feature is set to: a number, or one categorical level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub label: String,
    /// Grid value for numeric features.
    pub x: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub feature: String,
    pub points: Vec<PdPoint>,
    pub n_samples: usize,
    pub seed: u64,
}

impl PdCurve {
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.value), hi.max(p.value)));
        if self.points.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Population standard deviation of the curve values.
    pub fn spread(&self) -> f64 {
        let n = self.points.len() as f64;
        let mean = self.points.iter().map(|p| p.value).sum::<f64>() / n;
        (self.points.iter().map(|p| (p.value - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// `n` equally spaced points between the 1st and 99th percentile.
pub fn default_grid(values: &[f64], n: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, 0.01);
    let hi = quantile(&sorted, 0.99);
    if n < 2 || lo == hi {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Settings of one feature to probe, as (label, numeric value, column assignments).
fn feature_settings(feature: &FeatureGroup, data: &PreparedData, grid: Option<&[f64]>) -> Vec<(String, Option<f64>, Vec<(usize, f64)>)> {
    match &feature.kind {
        FeatureKind::Continuous { column } | FeatureKind::Ordinal { column } => {
            let values = data.moderators.column(*column).to_vec();
            let points = match grid {
                Some(g) => g.to_vec(),
                None => {
                    let mut distinct = values.clone();
                    distinct.sort_by(f64::total_cmp);
                    distinct.dedup();
                    if matches!(feature.kind, FeatureKind::Ordinal { .. }) && distinct.len() <= DEFAULT_GRID {
                        distinct
                    } else {
                        default_grid(&values, DEFAULT_GRID)
                    }
                }
            };
            points
                .into_iter()
                .map(|g| (format!("{g:?}"), Some(g), vec![(*column, g)]))
                .collect()
        }
        FeatureKind::Categorical { columns, levels } => {
            let mut out = vec![("reference".to_string(), None, columns.iter().map(|&c| (c, 0.0)).collect())];
            for (i, level) in levels.iter().enumerate() {
                let assign = columns
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| (c, if i == j { 1.0 } else { 0.0 }))
                    .collect();
                out.push((level.clone(), None, assign));
            }
            out
        }
    }
}

fn sample_rows(n: usize, n_samples: usize, seed: u64) -> Vec<usize> {
    let k = n_samples.min(n);
    let mut rows = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec();
    rows.sort_unstable();
    rows
}

/// Average index over `n_samples` sampled rows as one feature is swept.
pub fn partial_dependence(
    model: &impl Summarizer,
    data: &PreparedData,
    feature: &str,
    grid: Option<&[f64]>,
    n_samples: usize,
    seed: u64,
) -> Result<PdCurve> {
    let group = data.feature(feature)?;
    if n_samples == 0 {
        return Err(Error::Config("partial dependence needs at least one sample".into()));
    }
    let rows = sample_rows(data.n_rows(), n_samples, seed);
    let base = data.moderators.select(Axis(0), &rows);
    let points = feature_settings(group, data, grid)
        .into_iter()
        .map(|(label, x, assign)| {
            let mut probe = base.clone();
            for (c, v) in assign {
                probe.column_mut(c).fill(v);
            }
            let idx = model.index(probe.view())?;
            let value = idx.iter().sum::<f64>() / idx.len() as f64;
            Ok(PdPoint { label, x, value })
        })
        .collect::<Result<_>>()?;
    Ok(PdCurve {
        feature: feature.to_string(),
        points,
        n_samples: rows.len(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceStat {
    /// `max - min` of the PD curve.
    #[default]
    Range,
    /// Standard deviation of the PD curve.
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub rank: usize,
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
    pub curves: Vec<PdCurve>,
    pub statistic: ImportanceStat,
    pub n_samples: usize,
    pub seed: u64,
}

/// Ranks features by how much their PD curve moves, descending; ties
/// fall back to name order.
pub fn pd_importance(
    model: &impl Summarizer,
    data: &PreparedData,
    features: &[String],
    n_samples: usize,
    seed: u64,
    statistic: ImportanceStat,
) -> Result<ImportanceRanking> {
    let curves: Vec<PdCurve> = features
        .iter()
        .map(|f| partial_dependence(model, data, f, None, n_samples, seed))
        .collect::<Result<_>>()?;
    let mut scored: Vec<(String, f64)> = curves
        .iter()
        .map(|c| {
            let v = match statistic {
                ImportanceStat::Range => c.range(),
                ImportanceStat::Spread => c.spread(),
            };
            (c.feature.clone(), v)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let entries = scored
        .into_iter()
        .enumerate()
        .map(|(i, (feature, importance))| ImportanceEntry {
            rank: i + 1,
            feature,
            importance,
        })
        .collect();
    Ok(ImportanceRanking {
        entries,
        n_samples: curves.first().map_or(0, |c| c.n_samples),
        curves,
        statistic,
        seed,
    })
}

impl ImportanceRanking {
    /// CSV `rank,feature,importance`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, comment: &str) -> Result<()> {
        writeln!(out, "# {comment}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature", "importance"])?;
        for e in &self.entries {
            w.write_record([e.rank.to_string(), e.feature.clone(), format!("{:?}", e.importance)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes PD curves as `feature,x,value,count`.
pub fn write_pd_csv<W: std::io::Write>(curves: &[PdCurve], mut out: W, comment: &str) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "x", "value", "count"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.feature.clone(), p.label.clone(), format!("{:?}", p.value), c.n_samples.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    /// Strictly increasing quantile edges.
    pub edges: Vec<f64>,
    /// Centered accumulated effect at each edge.
    pub values: Vec<f64>,
    /// Rows falling in each bin `(edges[b], edges[b+1]]`.
    pub counts: Vec<usize>,
    pub n_bins: usize,
}

impl AleCurve {
    /// Effect averaged over each bin (the midpoint of its two edges).
    pub fn bin_values(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// First-order ALE over quantile bins of a numeric feature.
pub fn ale(model: &impl Summarizer, data: &PreparedData, feature: &str, n_bins: usize) -> Result<AleCurve> {
    let group = data.feature(feature)?;
    let column = match group.kind {
        FeatureKind::Continuous { column } | FeatureKind::Ordinal { column } => column,
        FeatureKind::Categorical { .. } => return Err(Error::UnsupportedKind(feature.to_string())),
    };
    if n_bins == 0 {
        return Err(Error::Config("ALE needs at least one bin".into()));
    }
    let values = data.moderators.column(column).to_vec();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins).map(|k| quantile(&sorted, k as f64 / n_bins as f64)).collect();
    edges.dedup();
    if edges.len() < 2 {
        return Err(Error::DegenerateColumn(feature.to_string()));
    }
    let bins = edges.len() - 1;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (r, &x) in values.iter().enumerate() {
        // first edge >= x, bins are (lo, hi] with the lowest edge folded into bin 0
        let b = edges.partition_point(|&e| e < x).clamp(1, bins) - 1;
        members[b].push(r);
    }

    let mut acc = vec![0.0; bins + 1];
    for b in 0..bins {
        let rows = &members[b];
        let delta = if rows.is_empty() {
            0.0
        } else {
            let base: Array2<f64> = data.moderators.select(Axis(0), rows);
            let mut lo = base.clone();
            lo.column_mut(column).fill(edges[b]);
            let mut hi = base;
            hi.column_mut(column).fill(edges[b + 1]);
            let f_lo = model.index(lo.view())?;
            let f_hi = model.index(hi.view())?;
            f_hi.iter().zip(&f_lo).map(|(h, l)| h - l).sum::<f64>() / rows.len() as f64
        };
        acc[b + 1] = acc[b] + delta;
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let total: usize = counts.iter().sum();
    let offset = (0..bins)
        .map(|b| counts[b] as f64 * 0.5 * (acc[b] + acc[b + 1]))
        .sum::<f64>()
        / total as f64;
    Ok(AleCurve {
        feature: feature.to_string(),
        values: acc.iter().map(|a| a - offset).collect(),
        edges,
        counts,
        n_bins: bins,
    })
}

/// Writes ALE curves as `feature,x,value,count`; `count` is the number of
/// rows in the bin ending at `x` (0 at the lowest edge).
pub fn write_ale_csv<W: std::io::Write>(curves: &[AleCurve], mut out: W, comment: &str) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "x", "value", "count"])?;
    for c in curves {
        for (i, (x, v)) in c.edges.iter().zip(&c.values).enumerate() {
            let count = if i == 0 { 0 } else { c.counts[i - 1] };
            w.write_record([c.feature.clone(), format!("{x:?}"), format!("{v:?}"), count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
