//! The composite model and its training loop.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::neural::{adamw_step, AdamWConfig, BatchStats, EnsembleModel, ForwardMode, MlpParams, OptimizerState, ParamBlock};
use crate::twin::{evaluate_twin, SplitLabel, TwinOptions};

/// `y = c0 + c_lin . x + c_focal * x_f + c_int * f(M) * x_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegnnModel {
    pub c0: f64,
    pub c_lin: Vec<f64>,
    pub c_focal: f64,
    pub c_int: f64,
    pub ensemble: EnsembleModel,
    /// Expanded moderator column names, in input order.
    pub term_names: Vec<String>,
    pub focal_name: String,
    pub plan_hash: String,
}

/// Rows of a prepared dataset, borrowed for one forward/backward pass.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub moderators: ArrayView2<'a, f64>,
    pub focal: &'a [f64],
    pub outcome: &'a [f64],
    pub weights: &'a [f64],
}

impl<'a> From<&'a PreparedData> for Batch<'a> {
    fn from(d: &'a PreparedData) -> Self {
        Batch {
            moderators: d.moderators.view(),
            focal: &d.focal,
            outcome: &d.outcome,
            weights: &d.weights,
        }
    }
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.focal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.focal.is_empty()
    }
}

/// Gradient of the weighted MSE with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RegnnGrads {
    pub c0: f64,
    pub c_lin: Vec<f64>,
    pub c_focal: f64,
    pub c_int: f64,
    pub members: Vec<MlpParams>,
}

pub fn weighted_mse(pred: &[f64], target: &[f64], w: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != w.len() {
        return Err(Error::Layout("prediction, target and weight lengths differ".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let sse: f64 = pred
        .iter()
        .zip(target)
        .zip(w)
        .map(|((p, t), w)| w * (p - t).powi(2))
        .sum();
    Ok(sse / total)
}

impl RegnnModel {
    /// Zero regression coefficients around a freshly initialized summarizer.
    pub fn new(ensemble: EnsembleModel, term_names: Vec<String>, focal_name: String, plan_hash: String) -> Self {
        let d = term_names.len();
        Self {
            c0: 0.0,
            c_lin: vec![0.0; d],
            c_focal: 0.0,
            c_int: 0.0,
            ensemble,
            term_names,
            focal_name,
            plan_hash,
        }
    }

    fn check_layout(&self, moderators: ArrayView2<f64>, focal: &[f64]) -> Result<()> {
        if moderators.ncols() != self.c_lin.len() || self.ensemble.d_in() != self.c_lin.len() {
            return Err(Error::Layout(format!(
                "rows have {} moderator columns, model expects {}",
                moderators.ncols(),
                self.c_lin.len()
            )));
        }
        if focal.len() != moderators.nrows() {
            return Err(Error::Layout("focal length differs from row count".into()));
        }
        Ok(())
    }

    /// Checks that prepared data carries the moderator columns this model was trained on.
    pub fn check_data(&self, data: &PreparedData) -> Result<()> {
        if data.moderator_names != self.term_names {
            return Err(Error::Layout("moderator columns differ from the trained model".into()));
        }
        Ok(())
    }

    fn linear_part(&self, moderators: ArrayView2<f64>, focal: &[f64]) -> Vec<f64> {
        moderators
            .rows()
            .into_iter()
            .zip(focal)
            .map(|(row, &f)| self.c0 + row.iter().zip(&self.c_lin).map(|(x, c)| x * c).sum::<f64>() + self.c_focal * f)
            .collect()
    }

    /// Predicted outcome per row.
    pub fn predict(&self, moderators: ArrayView2<f64>, focal: &[f64], mode: ForwardMode) -> Result<Vec<f64>> {
        self.check_layout(moderators, focal)?;
        let pass = self.ensemble.forward(moderators, mode)?;
        let lin = self.linear_part(moderators, focal);
        Ok(lin
            .iter()
            .zip(&pass.index)
            .zip(focal)
            .map(|((l, g), f)| l + self.c_int * g * f)
            .collect())
    }

    pub fn predict_data(&self, data: &PreparedData, mode: ForwardMode) -> Result<Vec<f64>> {
        self.predict(data.moderators.view(), &data.focal, mode)
    }

    /// Prediction given an already computed index.
    pub fn predict_from_index(&self, data: &PreparedData, index: &[f64]) -> Result<Vec<f64>> {
        self.check_layout(data.moderators.view(), &data.focal)?;
        if index.len() != data.n_rows() {
            return Err(Error::Layout(format!("index has {} values for {} rows", index.len(), data.n_rows())));
        }
        let lin = self.linear_part(data.moderators.view(), &data.focal);
        Ok(lin
            .iter()
            .zip(index)
            .zip(&data.focal)
            .map(|((l, g), f)| l + self.c_int * g * f)
            .collect())
    }

    /// Weighted MSE and its exact gradient. In train mode the batch
    /// statistics to commit afterwards are returned as well.
    pub fn loss_and_gradients(&self, batch: Batch<'_>, mode: ForwardMode) -> Result<(f64, RegnnGrads, Option<BatchStats>)> {
        self.check_layout(batch.moderators, batch.focal)?;
        let pass = self.ensemble.forward(batch.moderators, mode)?;
        let lin = self.linear_part(batch.moderators, batch.focal);
        let pred: Vec<f64> = lin
            .iter()
            .zip(&pass.index)
            .zip(batch.focal)
            .map(|((l, g), f)| l + self.c_int * g * f)
            .collect();
        let loss = weighted_mse(&pred, batch.outcome, batch.weights)?;
        let total: f64 = batch.weights.iter().sum();
        // d loss / d prediction
        let e: Vec<f64> = pred
            .iter()
            .zip(batch.outcome)
            .zip(batch.weights)
            .map(|((p, t), w)| 2.0 * w * (p - t) / total)
            .collect();
        let d = self.c_lin.len();
        let mut g_lin = vec![0.0; d];
        for (row, &ei) in batch.moderators.rows().into_iter().zip(&e) {
            for (g, x) in g_lin.iter_mut().zip(row) {
                *g += ei * x;
            }
        }
        let c0 = e.iter().sum();
        let c_focal = e.iter().zip(batch.focal).map(|(a, f)| a * f).sum();
        let c_int = e
            .iter()
            .zip(&pass.index)
            .zip(batch.focal)
            .map(|((a, g), f)| a * g * f)
            .sum();
        let upstream: Vec<f64> = e.iter().zip(batch.focal).map(|(a, f)| a * self.c_int * f).collect();
        let members = self.ensemble.gradients(&pass, &upstream, mode)?;
        Ok((
            loss,
            RegnnGrads {
                c0,
                c_lin: g_lin,
                c_focal,
                c_int,
                members,
            },
            pass.batch_stats,
        ))
    }

    fn apply_gradients(&mut self, grads: &RegnnGrads, opt: &mut OptimizerState, cfg: &AdamWConfig, freeze: Freeze) -> Result<()> {
        let zero_members: Vec<MlpParams>;
        let members = if freeze.network {
            zero_members = grads.members.iter().map(|m| MlpParams::zeros(m.d_in())).collect();
            &zero_members
        } else {
            &grads.members
        };
        let g_c0 = [grads.c0];
        let g_focal = [grads.c_focal];
        let g_int = [if freeze.interaction { 0.0 } else { grads.c_int }];
        let mut c0 = [self.c0];
        let mut c_focal = [self.c_focal];
        let mut c_int = [self.c_int];
        {
            let mut blocks = vec![
                ParamBlock {
                    name: "c0".into(),
                    values: &mut c0,
                    grads: &g_c0,
                    decay: false,
                },
                ParamBlock {
                    name: "c_lin".into(),
                    values: &mut self.c_lin,
                    grads: &grads.c_lin,
                    decay: true,
                },
                ParamBlock {
                    name: "c_focal".into(),
                    values: &mut c_focal,
                    grads: &g_focal,
                    decay: true,
                },
                ParamBlock {
                    name: "c_int".into(),
                    values: &mut c_int,
                    grads: &g_int,
                    decay: !freeze.interaction,
                },
            ];
            blocks.extend(self.ensemble.blocks(members));
            adamw_step(&mut blocks, opt, cfg)?;
        }
        self.c0 = c0[0];
        self.c_focal = c_focal[0];
        self.c_int = c_int[0];
        Ok(())
    }

    /// Eval-mode index with running statistics.
    pub fn produce_index(&self, data: &PreparedData) -> Result<Vec<f64>> {
        self.check_data(data)?;
        self.ensemble.index(data.moderators.view())
    }

    /// Resolves the `f <-> -f` freedom so that `c_int >= 0`; predictions
    /// are unchanged.
    pub fn canonicalize_sign(&self) -> RegnnModel {
        let mut m = self.clone();
        if m.c_int < 0.0 {
            m.ensemble.negate_output();
            m.c_int = -m.c_int;
        }
        m
    }

    /// L2 norm over `c_lin`, `c_focal` and `c_int`.
    pub fn coef_l2(&self) -> f64 {
        let s: f64 = self.c_lin.iter().map(|c| c * c).sum::<f64>() + self.c_focal.powi(2) + self.c_int.powi(2);
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c0.is_finite()
            && self.c_focal.is_finite()
            && self.c_int.is_finite()
            && self.c_lin.iter().all(|c| c.is_finite())
            && self.ensemble.is_finite()
    }
}

/// Parameters held fixed during training (diagnostics only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Freeze {
    pub network: bool,
    pub interaction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Decoupled decay on `c_lin`, `c_focal` and `c_int` only.
    pub weight_decay: f64,
    pub dropout: f64,
    pub split_ratio: f64,
    pub seed: u64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub sign_canonicalization: bool,
    /// Return the epoch with the lowest held-out interaction p-value
    /// instead of the final one.
    pub select_best_epoch: bool,
    pub twin: TwinOptions,
    pub freeze: Freeze,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 0.005,
            weight_decay: 0.01,
            dropout: 0.2,
            split_ratio: 0.7,
            seed: 0,
            batch_size: None,
            sign_canonicalization: true,
            select_best_epoch: false,
            twin: TwinOptions::default(),
            freeze: Freeze::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.batch_size.is_some_and(|b| b < 2) {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Per-epoch metrics. Twin metrics are `None` when the twin fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub p_int_train: Option<f64>,
    pub p_int_test: Option<f64>,
    pub adj_r2_train: Option<f64>,
    pub adj_r2_test: Option<f64>,
    pub coef_l2: f64,
    pub abs_c_int: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "epoch",
    "train_loss",
    "test_loss",
    "p_int_train",
    "p_int_test",
    "adj_r2_train",
    "adj_r2_test",
    "coef_l2",
    "abs_c_int",
];

/// Writes one CSV row per epoch; missing metrics are empty cells.
pub fn write_trajectory_csv<W: std::io::Write>(records: &[TrajectoryRecord], mut out: W, comment: &str) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            format!("{:?}", r.train_loss),
            format!("{:?}", r.test_loss),
            opt(r.p_int_train),
            opt(r.p_int_test),
            opt(r.adj_r2_train),
            opt(r.adj_r2_test),
            format!("{:?}", r.coef_l2),
            format!("{:?}", r.abs_c_int),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Loss more than this multiple of the first epoch's aborts training.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: RegnnModel,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Epoch whose parameters `model` holds.
    pub epoch: usize,
}

fn derive_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    // splitmix64 over the packed triple
    let mut z = seed ^ ((epoch as u64) << 32) ^ (step as u64).wrapping_mul(0x9E37_79B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn minibatches(n: usize, size: Option<usize>, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let size = size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    if size < n {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch, usize::MAX)));
    }
    let mut chunks: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    // Batch norm needs two rows; fold a trailing singleton into its neighbour.
    if chunks.len() > 1 && chunks.last().unwrap().len() < 2 {
        let tail = chunks.pop().unwrap();
        chunks.last_mut().unwrap().extend(tail);
    }
    chunks
}

/// Trains on `train_set`, evaluating the twin regression on both sets at
/// the end of every epoch.
pub fn train(config: &TrainConfig, train_set: &PreparedData, test_set: &PreparedData, plan_hash: &str) -> Result<Trained> {
    config.validate()?;
    if train_set.moderator_names != test_set.moderator_names || train_set.focal_name != test_set.focal_name {
        return Err(Error::Layout("train and test sets have different layouts".into()));
    }
    let n = train_set.n_rows();
    let width = train_set.design_width();
    if n <= width + 2 {
        return Err(Error::Underdetermined { n, terms: width + 2 });
    }
    let ensemble = EnsembleModel::init(config.seed, train_set.moderators.ncols())?;
    let mut model = RegnnModel::new(
        ensemble,
        train_set.moderator_names.clone(),
        train_set.focal_name.clone(),
        plan_hash.to_string(),
    );
    let opt_cfg = config.optimizer();
    let mut opt = OptimizerState::default();
    let mut trajectory = Vec::with_capacity(config.epochs);
    let mut first_loss = None;
    let mut best: Option<(f64, usize, RegnnModel)> = None;
    let full_batch = config.batch_size.is_none_or(|b| b >= n);

    for epoch in 1..=config.epochs {
        for (step, rows) in minibatches(n, config.batch_size, config.seed, epoch).iter().enumerate() {
            let subset;
            let data = if full_batch {
                train_set
            } else {
                subset = train_set.subset(rows);
                &subset
            };
            let mode = ForwardMode::Train {
                dropout: config.dropout,
                seed: derive_seed(config.seed, epoch, step),
            };
            let (loss, grads, stats) = model.loss_and_gradients(data.into(), mode)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            model.apply_gradients(&grads, &mut opt, &opt_cfg, config.freeze)?;
            if let Some(stats) = stats {
                model.ensemble.commit_batch_stats(&stats);
            }
        }

        let train_index = model.produce_index(train_set)?;
        let test_index = model.produce_index(test_set)?;
        let train_loss = weighted_mse(&model.predict_from_index(train_set, &train_index)?, &train_set.outcome, &train_set.weights)?;
        let test_loss = weighted_mse(&model.predict_from_index(test_set, &test_index)?, &test_set.outcome, &test_set.weights)?;
        let reference = *first_loss.get_or_insert(train_loss);
        if !train_loss.is_finite() || !model.is_finite() || train_loss > DIVERGENCE_FACTOR * reference {
            return Err(Error::Divergence { epoch, loss: train_loss });
        }

        let twin = |data: &PreparedData, index: &[f64], label| match evaluate_twin(data, index, label, config.twin) {
            Ok(r) => (Some(r.p_int), Some(r.fit.adj_r2)),
            Err(e) => {
                log::debug!("epoch {epoch}: {label} twin fit failed: {e}");
                (None, None)
            }
        };
        let (p_int_train, adj_r2_train) = twin(train_set, &train_index, SplitLabel::Train);
        let (p_int_test, adj_r2_test) = twin(test_set, &test_index, SplitLabel::Test);
        let record = TrajectoryRecord {
            epoch,
            train_loss,
            test_loss,
            p_int_train,
            p_int_test,
            adj_r2_train,
            adj_r2_test,
            coef_l2: model.coef_l2(),
            abs_c_int: model.c_int.abs(),
        };
        log::info!(
            "epoch {epoch:>4} train_loss {train_loss:.5} test_loss {test_loss:.5} p_int_test {} |c_int| {:.4}",
            p_int_test.map_or("-".to_string(), |p| format!("{p:.3e}")),
            record.abs_c_int
        );
        if config.select_best_epoch {
            let p = p_int_test.unwrap_or(f64::INFINITY);
            if best.as_ref().is_none_or(|(bp, _, _)| p < *bp) {
                best = Some((p, epoch, model.clone()));
            }
        }
        trajectory.push(record);
    }

    let (model, epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, config.epochs),
    };
    let model = if config.sign_canonicalization {
        model.canonicalize_sign()
    } else {
        model
    };
    Ok(Trained {
        model,
        trajectory,
        epoch,
    })
}
