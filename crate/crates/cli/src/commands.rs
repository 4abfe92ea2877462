use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use regnn::checkpoint::Checkpoint;
use regnn::data::{apply_preprocess, fit_preprocess, load_table, FeatureKind, PreparedData, Schema};
use regnn::explain::{ale, pd_importance, write_ale_csv, write_pd_csv, AleCurve};
use regnn::linear::{build_full_mmr_design, fit_full_mmr, vif, FitReport, LinearFit, MmrOptions, VifReport};
use regnn::model::{write_trajectory_csv, TrajectoryRecord, TRAJECTORY_COLUMNS};
use regnn::pipeline::run;
use regnn::report::{provenance, stars, TOOL};
use regnn::synth::{generate, oracle_index};
use regnn::twin::{compare, evaluate_twin, twin_margins, Comparison, SplitLabel, TwinReport, TwinReportJson};
use regnn::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    regnn::report::write_json(&mut w, value)?;
    w.flush()?;
    Ok(())
}

/// Wraps a payload with the tool version and seed.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    tool: &'static str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn stamped<T: Serialize>(seed: u64, body: &T) -> Stamped<'_, T> {
    Stamped { tool: TOOL, seed, body }
}

fn read_inputs(cfg: &RunConfig) -> Result<(Schema, regnn::data::Dataset)> {
    let schema_path = cfg.require(&cfg.schema, "schema")?;
    let data_path = cfg.require(&cfg.data, "data")?;
    let schema = Schema::from_json_file(schema_path)?;
    if !data_path.exists() {
        return Err(Error::Config(format!("data file {} does not exist", data_path.display())));
    }
    let data = load_table(data_path, &schema)?;
    if data.dropped() > 0 {
        log::warn!("dropped {} incomplete rows", data.dropped());
    }
    Ok((schema, data))
}

fn plot_spec(dir: &Path, name: &str, seed: u64, spec: serde_json::Value) -> Result<()> {
    let mut value = json!({ "tool": TOOL, "seed": seed });
    value.as_object_mut().unwrap().extend(spec.as_object().cloned().unwrap_or_default());
    write_json(dir, name, &value)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let spec = &cfg.synth;
    let (data, truth) = generate(spec)?;
    let out = cfg.out_dir()?;
    let comment = provenance(spec.seed, &[("scenario", format!("{:?}", truth.scenario))]);
    let mut w = create(out, "data.csv")?;
    data.write_csv(&mut w, Some(&comment))?;
    w.flush()?;
    write_json(out, "schema.json", &spec.schema().variables())?;
    let oracle = oracle_index(&truth, &data)?;
    let oracle_sd = regnn::stats::variance(&oracle).sqrt();
    write_json(out, "truth.json", &stamped(spec.seed, &json!({ "truth": truth, "oracle_sd": oracle_sd })))?;
    log::info!("simulated {} rows ({:?})", data.n_rows(), truth.scenario);
    Ok(())
}

#[derive(Serialize)]
struct MmrReport {
    n: usize,
    dropped: usize,
    fit: FitReport,
    vif: VifReport,
}

fn full_mmr(data: &PreparedData) -> Result<(LinearFit, VifReport)> {
    let opts = MmrOptions::default();
    let fit = fit_full_mmr(data, opts)?;
    let design = build_full_mmr_design(data, opts);
    let vif = vif(design.x.slice(ndarray::s![.., 1..]), &design.names[1..], true)?;
    Ok((fit, vif))
}

fn write_fit_csv(dir: &Path, name: &str, comment: &str, fit: &FitReport) -> Result<()> {
    let mut w = create(dir, name)?;
    writeln!(w, "# {comment}")?;
    writeln!(w, "term,coef,se,t,p,ci_low,ci_high,stars")?;
    for t in &fit.terms {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            t.term,
            t.coef,
            t.se,
            t.t,
            t.p,
            t.ci_low,
            t.ci_high,
            stars(t.p)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn fit_mmr(cfg: &RunConfig) -> Result<()> {
    let (_, data) = read_inputs(cfg)?;
    let plan = fit_preprocess(&data)?;
    let prepared = apply_preprocess(&plan, &data)?;
    let (fit, vif) = full_mmr(&prepared)?;
    let out = cfg.out_dir()?;
    let seed = cfg.seed();
    let report = MmrReport {
        n: fit.n,
        dropped: data.dropped(),
        fit: fit.report(),
        vif,
    };
    write_json(out, "mmr.json", &stamped(seed, &report))?;
    write_fit_csv(out, "mmr.csv", &provenance(seed, &[]), &report.fit)?;
    log::info!("full MMR: r2 {:.4}, max VIF {:.3}", fit.r2, report.vif.max_vif);
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let (_, data) = read_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let r = run(&data, &cfg.train)?;
    let seed = cfg.train.seed;
    let ck = Checkpoint::new(
        cfg.train.clone(),
        r.prepared.plan.clone(),
        r.trained.model.clone(),
        r.trained.epoch,
        r.trained.trajectory.clone(),
    );
    let path = out.join("checkpoint.json");
    ck.save(&path)?;
    log::info!("writing {}", path.display());
    let mut w = create(out, "trajectory.csv")?;
    write_trajectory_csv(&r.trained.trajectory, &mut w, &provenance(seed, &[("epochs", cfg.train.epochs.to_string())]))?;
    w.flush()?;
    for label in [SplitLabel::Train, SplitLabel::Test, SplitLabel::All] {
        write_json(out, &format!("twin_{label}.json"), &stamped(seed, &r.twin(label).to_json()))?;
    }
    plot_spec(
        out,
        "trajectory.plot.json",
        seed,
        json!({
            "data": "trajectory.csv",
            "x": "epoch",
            "panels": [
                { "title": "loss", "y": ["train_loss", "test_loss"] },
                { "title": "interaction p-value", "y": ["p_int_train", "p_int_test"], "log_y": true },
                { "title": "adjusted r2", "y": ["adj_r2_train", "adj_r2_test"] },
                { "title": "coefficients", "y": ["coef_l2", "abs_c_int"] }
            ],
            "columns": TRAJECTORY_COLUMNS,
        }),
    )?;
    log::info!("held-out twin p_int {:.3e}", r.twin_test.p_int);
    Ok(())
}

/// Checkpoint plus the input data prepared with its plan.
fn restore(cfg: &RunConfig) -> Result<(Checkpoint, PreparedData)> {
    let ck = Checkpoint::load(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    let (_, data) = read_inputs(cfg)?;
    let prepared = apply_preprocess(&ck.plan, &data)?;
    ck.model.check_data(&prepared)?;
    Ok((ck, prepared))
}

pub fn index(cfg: &RunConfig) -> Result<()> {
    let (ck, prepared) = restore(cfg)?;
    let index = ck.model.produce_index(&prepared)?;
    let out = cfg.out_dir()?;
    let mut w = create(out, "index.csv")?;
    writeln!(w, "# {}", provenance(ck.config.seed, &[("plan", ck.plan_hash.clone())]))?;
    writeln!(w, "row,index")?;
    for (r, v) in index.iter().enumerate() {
        writeln!(w, "{r},{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn explain(cfg: &RunConfig) -> Result<()> {
    let (ck, prepared) = restore(cfg)?;
    let settings = &cfg.explain;
    let seed = cfg.seed.unwrap_or(ck.config.seed);
    let features = match &settings.features {
        Some(f) => f.clone(),
        None => prepared.features.iter().map(|f| f.name.clone()).collect(),
    };
    let ranking = pd_importance(&ck.model, &prepared, &features, settings.samples, seed, settings.statistic)?;
    let curves: Vec<AleCurve> = features
        .iter()
        .filter(|f| {
            let numeric = prepared
                .feature(f)
                .is_ok_and(|g| !matches!(g.kind, FeatureKind::Categorical { .. }));
            if !numeric {
                log::info!("skipping ALE for categorical feature {f}");
            }
            numeric
        })
        .map(|f| ale(&ck.model, &prepared, f, settings.bins))
        .collect::<Result<_>>()?;

    let out = cfg.out_dir()?;
    let comment = provenance(
        seed,
        &[
            ("n_samples", ranking.n_samples.to_string()),
            ("statistic", format!("{:?}", settings.statistic).to_lowercase()),
        ],
    );
    let mut w = create(out, "importance.csv")?;
    ranking.write_csv(&mut w, &comment)?;
    w.flush()?;
    let mut w = create(out, "pd.csv")?;
    write_pd_csv(&ranking.curves, &mut w, &comment)?;
    w.flush()?;
    let mut w = create(out, "ale.csv")?;
    write_ale_csv(&curves, &mut w, &provenance(seed, &[("bins", settings.bins.to_string())]))?;
    w.flush()?;
    plot_spec(
        out,
        "explain.plot.json",
        seed,
        json!({
            "panels": [
                { "title": "partial-dependence importance", "kind": "bar", "data": "importance.csv", "x": "feature", "y": "importance" },
                { "title": "accumulated local effects", "kind": "line", "data": "ale.csv", "group": "feature", "x": "x", "y": "value", "rug": "count" }
            ]
        }),
    )?;
    Ok(())
}

fn twin_on(ck: &Checkpoint, prepared: &PreparedData) -> Result<(Vec<f64>, TwinReport)> {
    let index = ck.model.produce_index(prepared)?;
    let rep = evaluate_twin(prepared, &index, SplitLabel::All, ck.config.twin)?;
    Ok((index, rep))
}

pub fn margins_cmd(cfg: &RunConfig) -> Result<()> {
    let (ck, prepared) = restore(cfg)?;
    let index = ck.model.produce_index(&prepared)?;
    let settings = &cfg.margins;
    let table = twin_margins(&prepared, &index, ck.config.twin, settings.points, &settings.groups)?;
    let focal = ck.plan.focal().clone();
    let outcome = ck.plan.outcome().clone();
    let table = table.rescaled(|v| focal.invert(v), outcome.mean, outcome.sd);

    let out = cfg.out_dir()?;
    let seed = ck.config.seed;
    let mut w = create(out, "margins.csv")?;
    table.write_csv(&mut w, &provenance(seed, &[("scale", "original".into())]))?;
    w.flush()?;
    plot_spec(
        out,
        "margins.plot.json",
        seed,
        json!({
            "title": "predicted outcome by index group",
            "kind": "line",
            "data": "margins.csv",
            "group": "group",
            "x": "focal_value",
            "y": "mean",
            "band": ["ci_low", "ci_high"],
            "groups": table.groups.iter().map(|g| json!({ "label": g.label, "percentile": g.percentile, "index_value": g.index_value })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectorySummary {
    epochs: usize,
    selected_epoch: usize,
    first: Option<TrajectoryRecord>,
    last: Option<TrajectoryRecord>,
    best_test_epoch: Option<usize>,
    best_p_int_test: Option<f64>,
}

fn summarize(records: &[TrajectoryRecord], selected: usize) -> TrajectorySummary {
    let best = records
        .iter()
        .filter_map(|r| r.p_int_test.map(|p| (r.epoch, p)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    TrajectorySummary {
        epochs: records.len(),
        selected_epoch: selected,
        first: records.first().cloned(),
        last: records.last().cloned(),
        best_test_epoch: best.map(|b| b.0),
        best_p_int_test: best.map(|b| b.1),
    }
}

#[derive(Serialize)]
struct Report {
    plan_hash: String,
    n: usize,
    comparison: Comparison,
    full_mmr: MmrSection,
    twin: TwinReportJson,
    trajectory: TrajectorySummary,
}

#[derive(Serialize)]
struct MmrSection {
    fit: FitReport,
    vif: VifReport,
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let (ck, prepared) = restore(cfg)?;
    let (full, full_vif) = full_mmr(&prepared)?;
    let (_, twin) = twin_on(&ck, &prepared)?;
    let comparison = compare(&full, &full_vif, &twin);
    let out = cfg.out_dir()?;
    let seed = ck.config.seed;
    let mut w = create(out, "comparison.csv")?;
    comparison.write_csv(&mut w, &provenance(seed, &[("plan", ck.plan_hash.clone())]))?;
    w.flush()?;
    let report = Report {
        plan_hash: ck.plan_hash.clone(),
        n: prepared.n_rows(),
        comparison,
        full_mmr: MmrSection {
            fit: full.report(),
            vif: full_vif,
        },
        twin: twin.to_json(),
        trajectory: summarize(&ck.trajectory, ck.epoch),
    };
    write_json(out, "report.json", &stamped(seed, &report))?;
    Ok(())
}
