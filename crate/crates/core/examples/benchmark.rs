//! Runs the dispersed three-way benchmark for a range of seeds and prints
//! one summary line per seed.
//!
//! ```text
//! cargo run --release -p regnn --example benchmark -- [seeds] [batch] [null]
//! ```

use std::time::Instant;

use regnn::linear::{build_full_mmr_design, fit_full_mmr, interaction_name, vif, MmrOptions};
use regnn::model::TrainConfig;
use regnn::pipeline::run;
use regnn::synth::{generate, index_recovery_score, moderator_name, oracle_index, SynthSpec, FOCAL};

fn main() -> regnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(3);
    let batch: Option<usize> = args.get(1).and_then(|s| s.parse().ok()).filter(|&b| b > 0);
    let null = args.get(2).is_some_and(|s| s == "null");
    for seed in 0..seeds {
        let start = Instant::now();
        let mut spec = SynthSpec { seed, ..SynthSpec::default() };
        if null {
            spec = spec.null();
        }
        let (data, truth) = generate(&spec)?;
        let config = TrainConfig { seed, batch_size: batch, ..TrainConfig::default() };
        let r = run(&data, &config)?;
        let full = fit_full_mmr(&r.prepared.all, MmrOptions::default())?;
        let carrier = interaction_name(&moderator_name(spec.carrier), FOCAL);
        let p_full = full.position(&carrier).map(|j| full.p_value[j]).unwrap_or(f64::NAN);
        let test_rows = data.subset(&r.prepared.split.test_rows);
        let oracle = oracle_index(&truth, &test_rows)?;
        let learned = r.trained.model.produce_index(&r.prepared.test)?;
        let score = if null { f64::NAN } else { index_recovery_score(&learned, &oracle)? };
        let design = build_full_mmr_design(&r.prepared.all, MmrOptions::default());
        let full_vif = vif(design.x.slice(ndarray::s![.., 1..]), &design.names[1..], true)?.max_vif;
        let first = r.trained.trajectory.first().and_then(|t| t.p_int_test).unwrap_or(f64::NAN);
        println!(
            "seed {seed:>2} p_full {p_full:.3} p_int_test {:.3e} (epoch1 {first:.3e}) recovery {score:.3} c_int {:.3} vif full {full_vif:.3} twin {:.3} {:.1}s",
            r.twin_test.p_int,
            r.twin_test.c_int(),
            r.twin_all.vif.max_vif,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
