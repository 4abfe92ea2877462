//! Demo operations on plain JSON strings, independent of the browser.

use std::cell::RefCell;

use ndarray::s;
use regnn::data::{apply_preprocess, fit_preprocess, Dataset, PreparedData, PreprocessPlan};
use regnn::explain::{ale, pd_importance, AleCurve, ImportanceEntry, ImportanceStat};
use regnn::linear::{build_full_mmr_design, fit_full_mmr, interaction_name, vif, MarginsTable, MmrOptions, PercentileGroup};
use regnn::model::{RegnnModel, TrainConfig, TrajectoryRecord};
use regnn::pipeline::run;
use regnn::synth::{generate, index_recovery_score, moderator_name, oracle_index, SynthSpec, SynthTruth};
use regnn::twin::{evaluate_twin, twin_margins, SplitLabel, TwinOptions};
use serde::{Deserialize, Serialize};

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
}

fn emit<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn err(e: regnn::Error) -> String {
    e.to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self { n: 2000, rho: 0.2, seed: 0 }
    }
}

#[derive(Debug, Serialize)]
struct InteractionTerm {
    term: String,
    coef: f64,
    p: f64,
}

#[derive(Debug, Serialize)]
struct FullSummary {
    interactions: Vec<InteractionTerm>,
    significant: usize,
    max_vif: f64,
    adj_r2: f64,
}

#[derive(Debug, Serialize)]
struct TwinSummary {
    p_int: f64,
    c_int: f64,
    max_vif: f64,
    adj_r2: f64,
}

#[derive(Debug, Serialize)]
struct CompareResult {
    n: usize,
    hidden_term: String,
    full: FullSummary,
    oracle_twin: TwinSummary,
}

fn simulate(n: usize, rho: f64, seed: u64) -> Result<(Dataset, SynthTruth), String> {
    generate(&SynthSpec { n, rho, seed, ..SynthSpec::default() }).map_err(err)
}

fn prepared(data: &Dataset) -> Result<(PreprocessPlan, PreparedData), String> {
    let plan = fit_preprocess(data).map_err(err)?;
    let p = apply_preprocess(&plan, data).map_err(err)?;
    Ok((plan, p))
}

/// Full MMR against the twin model built on the true index.
pub fn compare(params: &str) -> Result<String, String> {
    let p: CompareParams = parse(params)?;
    let (data, truth) = simulate(p.n, p.rho, p.seed)?;
    let (_, prep) = prepared(&data)?;
    let opts = MmrOptions::default();
    let full = fit_full_mmr(&prep, opts).map_err(err)?;
    let design = build_full_mmr_design(&prep, opts);
    let full_vif = vif(design.x.slice(s![.., 1..]), &design.names[1..], true).map_err(err)?;
    let interactions: Vec<InteractionTerm> = full
        .term_names
        .iter()
        .enumerate()
        .filter(|(_, t)| t.ends_with(&format!(":{}", prep.focal_name)))
        .map(|(j, t)| InteractionTerm {
            term: t.clone(),
            coef: full.coef[j],
            p: full.p_value[j],
        })
        .collect();
    let oracle = oracle_index(&truth, &data).map_err(err)?;
    let twin = evaluate_twin(&prep, &oracle, SplitLabel::All, TwinOptions::default()).map_err(err)?;
    emit(&CompareResult {
        n: prep.n_rows(),
        hidden_term: interaction_name(&moderator_name(truth.spec.carrier), &prep.focal_name),
        full: FullSummary {
            significant: interactions.iter().filter(|t| t.p < 0.05).count(),
            interactions,
            max_vif: full_vif.max_vif,
            adj_r2: full.adj_r2,
        },
        oracle_twin: TwinSummary {
            p_int: twin.p_int,
            c_int: twin.c_int(),
            max_vif: twin.vif.max_vif,
            adj_r2: twin.fit.adj_r2,
        },
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub n: usize,
    pub rho: f64,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            n: 1500,
            rho: 0.2,
            epochs: 60,
            lr: t.lr,
            dropout: t.dropout,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainResult {
    trajectory: Vec<TrajectoryRecord>,
    p_int_test: f64,
    c_int_test: f64,
    recovery_test: f64,
    margins: MarginsTable,
    features: Vec<String>,
}

struct Session {
    model: RegnnModel,
    data: PreparedData,
}

thread_local! {
    static SESSION: RefCell<Option<Session>> = const { RefCell::new(None) };
}

/// Trains on fresh synthetic data and keeps the model for [`explain`].
pub fn train(params: &str) -> Result<String, String> {
    let p: TrainParams = parse(params)?;
    let (data, truth) = simulate(p.n, p.rho, p.seed)?;
    let cfg = TrainConfig {
        epochs: p.epochs,
        lr: p.lr,
        dropout: p.dropout,
        seed: p.seed,
        ..TrainConfig::default()
    };
    let r = run(&data, &cfg).map_err(err)?;
    let learned = r.trained.model.produce_index(&r.prepared.test).map_err(err)?;
    let oracle = oracle_index(&truth, &data.subset(&r.prepared.split.test_rows)).map_err(err)?;
    let recovery = index_recovery_score(&learned, &oracle).map_err(err)?;
    let index = r.trained.model.produce_index(&r.prepared.all).map_err(err)?;
    let margins = twin_margins(&r.prepared.all, &index, cfg.twin, 11, &PercentileGroup::defaults()).map_err(err)?;
    let result = TrainResult {
        trajectory: r.trained.trajectory.clone(),
        p_int_test: r.twin_test.p_int,
        c_int_test: r.twin_test.c_int(),
        recovery_test: recovery,
        margins,
        features: r.prepared.all.features.iter().map(|f| f.name.clone()).collect(),
    };
    SESSION.with(|s| {
        *s.borrow_mut() = Some(Session {
            model: r.trained.model,
            data: r.prepared.all,
        })
    });
    emit(&result)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainParams {
    pub feature: String,
    pub bins: usize,
    pub samples: usize,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            feature: moderator_name(1),
            bins: 12,
            samples: 200,
        }
    }
}

#[derive(Debug, Serialize)]
struct ExplainResult {
    ale: AleCurve,
    importance: Vec<ImportanceEntry>,
}

/// ALE curve of one feature and PD importance of all features for the
/// last trained model.
pub fn explain(params: &str) -> Result<String, String> {
    let p: ExplainParams = parse(params)?;
    SESSION.with(|s| {
        let guard = s.borrow();
        let session = guard.as_ref().ok_or("train a model first")?;
        let curve = ale(&session.model, &session.data, &p.feature, p.bins).map_err(err)?;
        let names: Vec<String> = session.data.features.iter().map(|f| f.name.clone()).collect();
        let ranking = pd_importance(&session.model, &session.data, &names, p.samples, 0, ImportanceStat::Range).map_err(err)?;
        emit(&ExplainResult {
            ale: curve,
            importance: ranking.entries,
        })
    })
}
