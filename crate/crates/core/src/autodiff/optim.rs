use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParameterSet};
use crate::error::{GeegaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// Decay added to the gradient before the moment updates.
    Coupled,
    /// Decay applied directly to the parameter, outside the adaptive step.
    Decoupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, kind: OptimizerKind, lr: f64, weight_decay: f64, decay_mode: DecayMode) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        OptimizerState {
            kind,
            lr,
            weight_decay,
            decay_mode,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn adam(params: &ParameterSet, lr: f64, weight_decay: f64) -> Self {
        OptimizerState::new(params, OptimizerKind::adam(), lr, weight_decay, DecayMode::Decoupled)
    }

    pub fn sgd(params: &ParameterSet, lr: f64) -> Self {
        OptimizerState::new(params, OptimizerKind::Sgd, lr, 0.0, DecayMode::Coupled)
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.v[index]
    }
}

/// One optimizer step at learning rate `state.lr * lr_multiplier`.
///
/// Non-trainable parameters (class centers) are skipped. Parameters flagged
/// `decay = false` receive no weight decay.
pub fn optimizer_step(
    params: &mut ParameterSet,
    grads: &ParamGrads,
    state: &mut OptimizerState,
    lr_multiplier: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(GeegaError::Contract(format!(
            "optimizer expects {} parameters, gradients hold {} and state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((id, p), (m, v)) in params
        .iter()
        .map(|(id, p)| (id, p.value.len()))
        .zip(state.m.iter().zip(&state.v))
    {
        if grads.get(id).len() != p || m.len() != p || v.len() != p {
            return Err(GeegaError::Contract(format!(
                "shape mismatch for parameter #{}",
                id.index()
            )));
        }
    }
    state.step += 1;
    let lr = state.lr * lr_multiplier;
    let t = state.step as i32;
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let g = grads.get(super::params::ParamId(i));
        let wd = if p.decay { state.weight_decay } else { 0.0 };
        let theta = p.value.data_mut();
        match state.kind {
            OptimizerKind::Sgd => {
                for (w, &gj) in theta.iter_mut().zip(g) {
                    *w -= lr * (gj + wd * *w);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (m, v) = (&mut state.m[i], &mut state.v[i]);
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for j in 0..theta.len() {
                    let mut gj = g[j];
                    match state.decay_mode {
                        DecayMode::Coupled => gj += wd * theta[j],
                        DecayMode::Decoupled => theta[j] -= lr * wd * theta[j],
                    }
                    m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    theta[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}
