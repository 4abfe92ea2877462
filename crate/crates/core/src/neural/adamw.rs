//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment accumulators, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

/// One named parameter tensor with its gradient.
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
    /// Apply decoupled weight decay to this block.
    pub decay: bool,
}

/// One bias-corrected AdamW update over every block.
///
/// Decay is `theta -= lr * wd * theta`, applied before the Adam step and
/// only to blocks with `decay` set. Nothing is modified when any gradient
/// is non-finite.
pub fn adamw_step(blocks: &mut [ParamBlock<'_>], state: &mut OptimizerState, cfg: &AdamWConfig) -> Result<()> {
    for b in blocks.iter() {
        if b.values.len() != b.grads.len() {
            return Err(Error::Layout(format!("gradient shape mismatch in `{}`", b.name)));
        }
        if b.grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { block: b.name.clone() });
        }
    }
    if state.m.is_empty() {
        state.m = blocks.iter().map(|b| vec![0.0; b.values.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != blocks.len() || state.m.iter().zip(blocks.iter()).any(|(m, b)| m.len() != b.values.len()) {
        return Err(Error::Layout("optimizer state does not match parameter blocks".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((b, m), v) in blocks.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let decay = if b.decay { cfg.lr * cfg.weight_decay } else { 0.0 };
        for i in 0..b.values.len() {
            let g = b.grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let theta = b.values[i] * (1.0 - decay);
            b.values[i] = theta - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(theta: f64, g: f64, cfg: AdamWConfig, decay: bool) -> f64 {
        let mut values = [theta];
        let grads = [g];
        let mut state = OptimizerState::default();
        let mut blocks = [ParamBlock {
            name: "p".into(),
            values: &mut values,
            grads: &grads,
            decay,
        }];
        adamw_step(&mut blocks, &mut state, &cfg).unwrap();
        values[0]
    }

    #[test]
    fn first_step_without_decay() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        assert!((step(1.0, 1.0, cfg, true) - 0.995).abs() < 1e-6);
    }

    #[test]
    fn first_step_with_masked_decay() {
        let cfg = AdamWConfig::default();
        assert!((step(1.0, 1.0, cfg, true) - 0.99495).abs() < 1e-6);
        // same config, block not in the decay mask
        assert!((step(1.0, 1.0, cfg, false) - 0.995).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        assert_eq!(step(0.7, 0.0, cfg, true), 0.7);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut values = [1.0, 2.0];
        let grads = [0.0, f64::NAN];
        let mut state = OptimizerState::default();
        let mut blocks = [ParamBlock {
            name: "member0.layer2.weight".into(),
            values: &mut values,
            grads: &grads,
            decay: false,
        }];
        let err = adamw_step(&mut blocks, &mut state, &AdamWConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref block } if block == "member0.layer2.weight"));
        assert_eq!(values, [1.0, 2.0]);
        assert_eq!(state.t, 0);
    }
}
