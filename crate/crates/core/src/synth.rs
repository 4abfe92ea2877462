//! Synthetic datasets with known moderation structure.
//!
//! Moderators are exchangeable Gaussians with correlation `rho`; the focal
//! predictor is an independent standard normal (optionally correlated with
//! `m1`). The outcome is
//!
//! ```text
//! o = c0 + sum_k c_k m_k + c_f x_f + g(m) x_f + eps
//! g(m) = sum_{k in two_way} a_k m_k + sum_{k in K} c_lk m_k m_l
//! ```
//!
//! so `g` is the oracle moderator a learned index should recover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, Kind, Role, Schema, VariableSpec};
use crate::error::{Error, Result};
use crate::stats::pearson;

pub const OUTCOME: &str = "o";
pub const FOCAL: &str = "x_f";
pub const WEIGHT: &str = "w";
/// Tertile cut points of the standard normal.
const TERTILE: f64 = 0.430_727_299_295_457_5;
pub const CATEGORICAL_LEVELS: [&str; 3] = ["low", "mid", "high"];

pub fn moderator_name(k: usize) -> String {
    format!("m{k}")
}

/// One interaction coefficient on moderator `k` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub k: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum WeightScheme {
    Uniform,
    /// `exp(N(0, sigma^2))`.
    Lognormal { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    /// Exchangeable moderator correlation.
    pub rho: f64,
    pub c0: f64,
    /// Main effects of `m1..mp`.
    pub c_lin: Vec<f64>,
    pub c_focal: f64,
    /// Carrier moderator `l` of the three-way terms (1-based).
    pub carrier: usize,
    /// Three-way terms `c_lk m_k m_l x_f`.
    pub three_way: Vec<Term>,
    /// Isolated two-way terms `a_k m_k x_f`.
    pub two_way: Vec<Term>,
    pub sigma: f64,
    pub weights: WeightScheme,
    /// `corr(x_f, m1)`; zero keeps the focal independent.
    pub focal_confounding: f64,
    /// Moderators (1-based) thresholded at normal tertiles into three
    /// levels. Their coded value `-1, 0, 1` enters the outcome equation.
    pub categorical: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// The dispersed three-way benchmark.
    fn default() -> Self {
        Self {
            n: 5000,
            p: 12,
            rho: 0.2,
            c0: 1.0,
            c_lin: vec![0.3, -0.2, 0.25, -0.15, 0.1, 0.2, -0.1, 0.15, -0.25, 0.05, 0.1, -0.05],
            c_focal: -0.5,
            carrier: 1,
            three_way: vec![
                Term { k: 2, coef: 0.5 },
                Term { k: 3, coef: 0.3 },
                Term { k: 4, coef: -0.4 },
                Term { k: 5, coef: -0.4 },
            ],
            two_way: Vec::new(),
            sigma: 1.0,
            weights: WeightScheme::Lognormal { sigma: 0.5 },
            focal_confounding: 0.0,
            categorical: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Same design with every interaction coefficient zeroed.
    pub fn null(self) -> Self {
        Self {
            three_way: Vec::new(),
            two_way: Vec::new(),
            ..self
        }
    }

    pub fn scenario(&self) -> Scenario {
        if self.three_way.iter().any(|t| t.coef != 0.0) {
            Scenario::DispersedThreeWay
        } else if self.two_way.iter().any(|t| t.coef != 0.0) {
            Scenario::IsolatedTwoWay
        } else {
            Scenario::Null
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("correlation rho = {} must lie in [0, 1)", self.rho)));
        }
        if !(self.focal_confounding > -1.0 && self.focal_confounding < 1.0) {
            return Err(Error::Config(format!(
                "focal correlation {} must lie in (-1, 1)",
                self.focal_confounding
            )));
        }
        if self.n < 100 {
            return Err(Error::Config(format!("n = {} below the minimum of 100", self.n)));
        }
        if self.p < 1 {
            return Err(Error::Config("need at least one moderator".into()));
        }
        if self.c_lin.len() != self.p {
            return Err(Error::Config(format!("{} main effects for p = {}", self.c_lin.len(), self.p)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("noise sigma must be positive".into()));
        }
        if let WeightScheme::Lognormal { sigma } = self.weights {
            if !(sigma > 0.0) {
                return Err(Error::Config("lognormal weight sigma must be positive".into()));
            }
        }
        let valid = |k: usize| (1..=self.p).contains(&k);
        let mut indices = self.three_way.iter().chain(&self.two_way).map(|t| t.k);
        if !valid(self.carrier) || indices.any(|k| !valid(k)) || self.categorical.iter().any(|&k| !valid(k)) {
            return Err(Error::Config(format!("moderator indices must lie in 1..={}", self.p)));
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let mut vars = vec![
            VariableSpec::new(OUTCOME, Role::Outcome, Kind::Continuous),
            VariableSpec::new(FOCAL, Role::Focal, Kind::Continuous),
        ];
        for k in 1..=self.p {
            let kind = if self.categorical.contains(&k) {
                Kind::Categorical(CATEGORICAL_LEVELS.iter().map(|s| s.to_string()).collect())
            } else {
                Kind::Continuous
            };
            vars.push(VariableSpec::new(moderator_name(k), Role::Moderator, kind));
        }
        vars.push(VariableSpec::new(WEIGHT, Role::Weight, Kind::Continuous));
        Schema::new(vars).expect("synthetic schema is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Null,
    IsolatedTwoWay,
    DispersedThreeWay,
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub scenario: Scenario,
    pub spec: SynthSpec,
}

impl SynthTruth {
    /// `g(m)` for one row of moderator values `m1..mp` (coded values for categoricals).
    pub fn oracle(&self, m: &[f64]) -> f64 {
        let s = &self.spec;
        let two: f64 = s.two_way.iter().map(|t| t.coef * m[t.k - 1]).sum();
        let three: f64 = s.three_way.iter().map(|t| t.coef * m[t.k - 1]).sum::<f64>() * m[s.carrier - 1];
        two + three
    }
}

/// Draws a dataset and its truth from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, SynthTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = SynthTruth {
        scenario: spec.scenario(),
        spec: spec.clone(),
    };
    let (n, p) = (spec.n, spec.p);
    let shared_w = spec.rho.sqrt();
    let own_w = (1.0 - spec.rho).sqrt();
    let lognormal = match spec.weights {
        WeightScheme::Lognormal { sigma } => Some(LogNormal::new(0.0, sigma).expect("validated")),
        WeightScheme::Uniform => None,
    };

    let mut o = Vec::with_capacity(n);
    let mut xf = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut mods: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p];
    let mut m = vec![0.0; p];
    for _ in 0..n {
        let common: f64 = rng.sample(StandardNormal);
        for (k, slot) in m.iter_mut().enumerate() {
            let own: f64 = rng.sample(StandardNormal);
            let latent = shared_w * common + own_w * own;
            *slot = if spec.categorical.contains(&(k + 1)) {
                tertile_code(latent)
            } else {
                latent
            };
        }
        let z: f64 = rng.sample(StandardNormal);
        let f = if spec.focal_confounding != 0.0 {
            let r = spec.focal_confounding;
            r * m[0] + (1.0 - r * r).sqrt() * z
        } else {
            z
        };
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * spec.sigma;
        let linear = spec.c0 + m.iter().zip(&spec.c_lin).map(|(a, b)| a * b).sum::<f64>() + spec.c_focal * f;
        o.push(linear + truth.oracle(&m) * f + eps);
        xf.push(f);
        w.push(lognormal.map_or(1.0, |d| rng.sample(d)));
        for (col, &v) in mods.iter_mut().zip(&m) {
            col.push(v);
        }
    }

    let mut columns = vec![Column::Numeric(o), Column::Numeric(xf)];
    for (k, col) in mods.into_iter().enumerate() {
        columns.push(if spec.categorical.contains(&(k + 1)) {
            Column::Categorical(col.iter().map(|&c| (c + 1.0) as u32).collect())
        } else {
            Column::Numeric(col)
        });
    }
    columns.push(Column::Numeric(w));
    let ds = Dataset::from_columns(spec.schema(), columns)?;
    Ok((ds, truth))
}

fn tertile_code(latent: f64) -> f64 {
    if latent < -TERTILE {
        -1.0
    } else if latent < TERTILE {
        0.0
    } else {
        1.0
    }
}

/// Oracle moderator for every row of a dataset produced by [`generate`]
/// (or any dataset carrying columns `m1..mp`).
pub fn oracle_index(truth: &SynthTruth, data: &Dataset) -> Result<Vec<f64>> {
    let p = truth.spec.p;
    let cols: Vec<Vec<f64>> = (1..=p)
        .map(|k| {
            let name = moderator_name(k);
            match data.column(&name) {
                Some(Column::Numeric(v)) => Ok(v.clone()),
                Some(Column::Categorical(v)) => Ok(v.iter().map(|&l| l as f64 - 1.0).collect()),
                None => Err(Error::Schema(format!("missing moderator column `{name}`"))),
            }
        })
        .collect::<Result<_>>()?;
    let mut row = vec![0.0; p];
    Ok((0..data.n_rows())
        .map(|r| {
            for (slot, c) in row.iter_mut().zip(&cols) {
                *slot = c[r];
            }
            truth.oracle(&row)
        })
        .collect())
}

/// `|corr(learned, oracle)|`, invariant to affine maps and sign flips.
pub fn index_recovery_score(learned: &[f64], oracle: &[f64]) -> Result<f64> {
    if learned.len() != oracle.len() {
        return Err(Error::Layout("index lengths differ".into()));
    }
    if learned.len() < 30 {
        return Err(Error::UndefinedScore(format!("need at least 30 rows, got {}", learned.len())));
    }
    pearson(learned, oracle)
        .map(f64::abs)
        .ok_or_else(|| Error::UndefinedScore("an input has zero variance".into()))
}
