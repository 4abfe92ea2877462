//! The moderator summarizer: an ensemble of small GeLU MLPs whose averaged
//! output is batch-normalized into a single index per row.
//!
//! Gradients are hand-derived reverse mode for exactly this architecture,
//! including the backward pass through batch statistics and through the
//! dropout masks recorded during the forward pass.

pub mod adamw;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState, ParamBlock};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::dist::normal_cdf;

/// Hidden widths between the input and the scalar output.
pub const HIDDEN: [usize; 3] = [30, 10, 2];
pub const ENSEMBLE_SIZE: usize = 5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `x * Phi(x)` with the exact normal CDF.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverted-dropout mask: kept units scaled by `1 / keep`, dropped ones 0.
pub fn dropout_mask(rng: &mut impl Rng, dim: (usize, usize), keep: f64) -> Array2<f64> {
    let scale = 1.0 / keep;
    Array2::from_shape_fn(dim, |_| if rng.random::<f64>() < keep { scale } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// One MLP of the ensemble, layers `D_in -> 30 -> 10 -> 2 -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn sizes(d_in: usize) -> Vec<usize> {
        let mut s = vec![d_in];
        s.extend(HIDDEN);
        s.push(1);
        s
    }

    pub fn zeros(d_in: usize) -> Self {
        let s = Self::sizes(d_in);
        Self {
            layers: s.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(rng: &mut impl Rng, d_in: usize) -> Self {
        let mut p = Self::zeros(d_in);
        for layer in &mut p.layers {
            let (fi, fo) = layer.weight.dim();
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        p
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Batch normalization without learned affine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub running_mean: f64,
    pub running_var: f64,
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNorm {
    fn default() -> Self {
        Self {
            running_mean: 0.0,
            running_var: 1.0,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    /// Dropout after each hidden GeLU, masks drawn from `seed`;
    /// normalization by batch statistics.
    Train { dropout: f64, seed: u64 },
    /// No dropout; normalization by running statistics.
    Eval,
}

impl ForwardMode {
    fn is_train(&self) -> bool {
        matches!(self, ForwardMode::Train { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<MlpParams>,
    pub batchnorm: BatchNorm,
}

/// Batch mean and biased variance of the averaged ensemble output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub mean: f64,
    pub var: f64,
    pub n: usize,
}

struct MemberCache {
    /// Input of each layer (post-dropout activations; `inputs[0]` is the batch).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    /// Scaled keep masks of the hidden layers, if dropout was active.
    masks: Vec<Option<Array2<f64>>>,
}

/// Output of a forward pass plus what the backward pass needs.
pub struct ForwardPass {
    pub index: Vec<f64>,
    /// Member average before normalization.
    pub averaged: Vec<f64>,
    /// Present in train mode; feed to [`EnsembleModel::commit_batch_stats`].
    pub batch_stats: Option<BatchStats>,
    mode: ForwardMode,
    members: Vec<MemberCache>,
    /// `1 / sqrt(var + eps)` used for normalization.
    inv_std: f64,
}

impl EnsembleModel {
    /// Deterministic initialization; member `k` draws from stream `k` of a
    /// ChaCha generator seeded with `seed`.
    pub fn init(seed: u64, d_in: usize) -> Result<Self> {
        if d_in == 0 {
            return Err(Error::Config("summarizer needs at least one input".into()));
        }
        let members = (0..ENSEMBLE_SIZE)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                MlpParams::init(&mut rng, d_in)
            })
            .collect();
        Ok(Self {
            members,
            batchnorm: BatchNorm::default(),
        })
    }

    pub fn zeros(d_in: usize) -> Self {
        Self {
            members: vec![MlpParams::zeros(d_in); ENSEMBLE_SIZE],
            batchnorm: BatchNorm::default(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.members[0].d_in()
    }

    pub fn is_finite(&self) -> bool {
        self.members.iter().all(MlpParams::is_finite)
            && self.batchnorm.running_mean.is_finite()
            && self.batchnorm.running_var.is_finite()
    }

    pub fn forward(&self, batch: ArrayView2<f64>, mode: ForwardMode) -> Result<ForwardPass> {
        let n = batch.nrows();
        if batch.ncols() != self.d_in() {
            return Err(Error::Layout(format!(
                "batch has {} columns, summarizer expects {}",
                batch.ncols(),
                self.d_in()
            )));
        }
        if mode.is_train() && n < 2 {
            return Err(Error::BatchSize(n));
        }
        let mut rng = match mode {
            ForwardMode::Train { dropout, seed } if dropout > 0.0 => {
                if !(dropout < 1.0) {
                    return Err(Error::Config(format!("dropout {dropout} must be < 1")));
                }
                Some((ChaCha8Rng::seed_from_u64(seed), 1.0 - dropout))
            }
            _ => None,
        };

        let mut avg = Array1::<f64>::zeros(n);
        let mut caches = Vec::with_capacity(self.members.len());
        for member in &self.members {
            let mut inputs = vec![batch.to_owned()];
            let mut pre = Vec::new();
            let mut masks = Vec::new();
            let last = member.layers.len() - 1;
            for (l, layer) in member.layers.iter().enumerate() {
                let z = inputs[l].dot(&layer.weight) + &layer.bias;
                if l == last {
                    avg += &z.column(0);
                    break;
                }
                let mut a = z.mapv(gelu);
                let mask = rng.as_mut().map(|(r, keep)| dropout_mask(r, a.dim(), *keep));
                if let Some(m) = &mask {
                    a *= m;
                }
                pre.push(z);
                masks.push(mask);
                inputs.push(a);
            }
            caches.push(MemberCache { inputs, pre, masks });
        }
        avg /= self.members.len() as f64;

        let bn = &self.batchnorm;
        let (center, var, batch_stats) = if mode.is_train() {
            let mean = avg.mean().unwrap();
            let var = avg.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var, Some(BatchStats { mean, var, n }))
        } else {
            (bn.running_mean, bn.running_var, None)
        };
        let inv_std = 1.0 / (var + bn.eps).sqrt();
        let index = avg.iter().map(|u| (u - center) * inv_std).collect();
        Ok(ForwardPass {
            index,
            averaged: avg.to_vec(),
            batch_stats,
            mode,
            members: caches,
            inv_std,
        })
    }

    /// Folds a train-mode batch into the running statistics (unbiased variance).
    pub fn commit_batch_stats(&mut self, stats: &BatchStats) {
        let bn = &mut self.batchnorm;
        let unbiased = stats.var * stats.n as f64 / (stats.n as f64 - 1.0);
        bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * stats.mean;
        bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased;
    }

    /// Reverse-mode parameter gradients given `d loss / d index` per row.
    pub fn gradients(&self, pass: &ForwardPass, upstream: &[f64], mode: ForwardMode) -> Result<Vec<MlpParams>> {
        if pass.mode != mode {
            return Err(Error::Usage("backward mode differs from the forward pass".into()));
        }
        let n = pass.index.len();
        if upstream.len() != n {
            return Err(Error::Layout(format!("{} upstream values for {n} rows", upstream.len())));
        }
        // d loss / d (averaged output)
        let d_avg: Vec<f64> = if mode.is_train() {
            let g_mean = upstream.iter().sum::<f64>() / n as f64;
            let gy_mean = upstream.iter().zip(&pass.index).map(|(g, y)| g * y).sum::<f64>() / n as f64;
            upstream
                .iter()
                .zip(&pass.index)
                .map(|(g, y)| pass.inv_std * (g - g_mean - y * gy_mean))
                .collect()
        } else {
            upstream.iter().map(|g| g * pass.inv_std).collect()
        };
        let k = self.members.len() as f64;
        let d_out = Array2::from_shape_fn((n, 1), |(r, _)| d_avg[r] / k);

        let grads = self
            .members
            .iter()
            .zip(&pass.members)
            .map(|(member, cache)| {
                let mut g = MlpParams::zeros(member.d_in());
                let mut delta = d_out.clone();
                for l in (0..member.layers.len()).rev() {
                    g.layers[l].weight.assign(&cache.inputs[l].t().dot(&delta));
                    g.layers[l].bias = delta.sum_axis(Axis(0));
                    if l == 0 {
                        break;
                    }
                    let mut d_in = delta.dot(&member.layers[l].weight.t());
                    if let Some(mask) = &cache.masks[l - 1] {
                        d_in *= mask;
                    }
                    d_in.zip_mut_with(&cache.pre[l - 1], |d, &z| *d *= gelu_grad(z));
                    delta = d_in;
                }
                g
            })
            .collect();
        Ok(grads)
    }

    /// Mutable parameter blocks with stable names, paired with gradients.
    pub fn blocks<'a>(&'a mut self, grads: &'a [MlpParams]) -> Vec<ParamBlock<'a>> {
        let mut out = Vec::new();
        for (k, (member, g)) in self.members.iter_mut().zip(grads).enumerate() {
            for (l, (layer, gl)) in member.layers.iter_mut().zip(&g.layers).enumerate() {
                out.push(ParamBlock {
                    name: format!("member{k}.layer{}.weight", l + 1),
                    values: layer.weight.as_slice_mut().expect("standard layout"),
                    grads: gl.weight.as_slice().expect("standard layout"),
                    decay: false,
                });
                out.push(ParamBlock {
                    name: format!("member{k}.layer{}.bias", l + 1),
                    values: layer.bias.as_slice_mut().expect("standard layout"),
                    grads: gl.bias.as_slice().expect("standard layout"),
                    decay: false,
                });
            }
        }
        out
    }

    /// Flips the orientation of the index: negates every member's output
    /// layer and the running mean.
    pub fn negate_output(&mut self) {
        for m in &mut self.members {
            let last = m.layers.last_mut().unwrap();
            last.weight.mapv_inplace(|v| -v);
            last.bias.mapv_inplace(|v| -v);
        }
        self.batchnorm.running_mean = -self.batchnorm.running_mean;
    }

    /// Eval-mode index for every row.
    pub fn index(&self, batch: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.forward(batch, ForwardMode::Eval)?.index)
    }
}
