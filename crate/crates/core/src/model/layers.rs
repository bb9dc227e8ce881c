use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Component, Graph, ParamId, ParameterSet, Tensor, Var};
use crate::error::Result;

/// `y = x W + b` with `W [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn new(
        params: &mut ParameterSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        component: Component,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let limit = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        let w = params.add(&format!("{name}.w"), component, Tensor::from_parts(&[fan_in, fan_out], w), true)?;
        let b = if bias {
            Some(params.add(&format!("{name}.b"), component, Tensor::zeros(&[fan_out]), false)?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, x: Var) -> Var {
        let w = g.param(params, self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(params, b);
                g.add_broadcast(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(params: &mut ParameterSet, name: &str, component: Component, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: params.add(&format!("{name}.gamma"), component, Tensor::full(&[dim], 1.0), false)?,
            beta: params.add(&format!("{name}.beta"), component, Tensor::zeros(&[dim]), false)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, x: Var) -> Var {
        let gamma = g.param(params, self.gamma);
        let beta = g.param(params, self.beta);
        g.layer_norm(x, gamma, beta, LN_EPS)
    }
}

/// Normal(0, std) initialised tensor.
pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::from_parts(shape, (0..n).map(|_| dist.sample(rng)).collect())
}
