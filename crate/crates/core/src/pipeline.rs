//! End-to-end runs: split, preprocess on the training rows, train, and
//! evaluate the twin regression on every split.

use crate::data::{apply_preprocess, fit_preprocess, split, Dataset, PreparedData, PreprocessPlan, SplitIndex};
use crate::error::Result;
use crate::model::{train, TrainConfig, Trained};
use crate::twin::{evaluate_twin, SplitLabel, TwinReport};

/// A dataset split and standardized with training-row statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub plan: PreprocessPlan,
    pub split: SplitIndex,
    pub train: PreparedData,
    pub test: PreparedData,
    pub all: PreparedData,
}

pub fn prepare(data: &Dataset, ratio: f64, seed: u64) -> Result<Prepared> {
    let split = split(data, ratio, seed)?;
    let plan = fit_preprocess(&data.subset(&split.train_rows))?;
    let all = apply_preprocess(&plan, data)?;
    Ok(Prepared {
        train: all.subset(&split.train_rows),
        test: all.subset(&split.test_rows),
        all,
        split,
        plan,
    })
}

#[derive(Debug, Clone)]
pub struct Run {
    pub prepared: Prepared,
    pub trained: Trained,
    pub twin_train: TwinReport,
    pub twin_test: TwinReport,
    pub twin_all: TwinReport,
}

impl Run {
    pub fn twin(&self, label: SplitLabel) -> &TwinReport {
        match label {
            SplitLabel::Train => &self.twin_train,
            SplitLabel::Test => &self.twin_test,
            SplitLabel::All => &self.twin_all,
        }
    }
}

/// Trains on a fresh split of `data` and refits the twin model on the
/// final index.
pub fn run(data: &Dataset, config: &TrainConfig) -> Result<Run> {
    config.validate()?;
    let prepared = prepare(data, config.split_ratio, config.seed)?;
    let trained = train(config, &prepared.train, &prepared.test, &prepared.plan.hash())?;
    let twin = |d: &PreparedData, label| -> Result<TwinReport> {
        let index = trained.model.produce_index(d)?;
        evaluate_twin(d, &index, label, config.twin)
    };
    let twin_train = twin(&prepared.train, SplitLabel::Train)?;
    let twin_test = twin(&prepared.test, SplitLabel::Test)?;
    let twin_all = twin(&prepared.all, SplitLabel::All)?;
    Ok(Run {
        prepared,
        trained,
        twin_train,
        twin_test,
        twin_all,
    })
}
