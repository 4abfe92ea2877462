//! Versioned JSON checkpoints of a trained model and its preprocessing plan.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PreprocessPlan;
use crate::error::{Error, Result};
use crate::model::{RegnnModel, TrainConfig, TrajectoryRecord};
use crate::report::TOOL;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub tool: String,
    pub config: TrainConfig,
    pub plan: PreprocessPlan,
    pub plan_hash: String,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    pub model: RegnnModel,
    pub trajectory: Vec<TrajectoryRecord>,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, plan: PreprocessPlan, model: RegnnModel, epoch: usize, trajectory: Vec<TrajectoryRecord>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool: TOOL.to_string(),
            config,
            plan_hash: plan.hash(),
            plan,
            epoch,
            model,
            trajectory,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        crate::report::write_json(file, self)
    }

    /// Loads and checks version and plan consistency.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        let hash = ck.plan.hash();
        if hash != ck.plan_hash || hash != ck.model.plan_hash {
            return Err(Error::Config("checkpoint preprocessing plan hash mismatch".into()));
        }
        if !ck.model.is_finite() {
            return Err(Error::NonFinite {
                block: "checkpoint parameters".into(),
            });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fit_preprocess;
    use crate::neural::EnsembleModel;
    use crate::synth::{generate, SynthSpec};

    fn checkpoint() -> Checkpoint {
        let (data, _) = generate(&SynthSpec { n: 200, ..SynthSpec::default() }).unwrap();
        let plan = fit_preprocess(&data).unwrap();
        let mut model = RegnnModel::new(
            EnsembleModel::init(3, 12).unwrap(),
            (1..=12).map(|k| format!("m{k}")).collect(),
            "x_f".into(),
            plan.hash(),
        );
        model.c_int = 0.1 + 1.0 / 3.0;
        Checkpoint::new(TrainConfig::default(), plan, model, 150, Vec::new())
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ck = checkpoint();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_tampered_plan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut ck = checkpoint();
        ck.plan_hash = "0".repeat(64);
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Config(_))));
        ck = checkpoint();
        ck.format_version = 99;
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Config(_))));
    }
}
