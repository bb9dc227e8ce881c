use rand_chacha::ChaCha8Rng;

use super::layers::Linear;
use super::GcnConfig;
use crate::autodiff::{Component, Graph, ParameterSet, Tensor, Var};
use crate::error::Result;

/// Uniform fully connected adjacency with self-loops, `J / N`.
pub fn uniform_adjacency(n: usize) -> Tensor {
    Tensor::full(&[n, n], 1.0 / n as f64)
}

/// Two graph-convolution layers over `N` nodes built from the concatenated
/// domain embeddings, then a flattening projection to `H`.
#[derive(Clone, Debug)]
pub struct GcnFusion {
    pub cfg: GcnConfig,
    pub input_dim: usize,
    pub adjacency: Tensor,
    pub expand: Linear,
    pub w1: Linear,
    pub w2: Linear,
    pub out: Linear,
}

/// Values inside the fusion block, for inspection in tests.
pub struct GcnTrace {
    pub nodes: Var,
    pub layer1_pre: Var,
    pub layer1_mixed: Var,
    pub layer2: Var,
}

impl GcnFusion {
    pub fn new(params: &mut ParameterSet, rng: &mut ChaCha8Rng, cfg: &GcnConfig, input_dim: usize) -> Result<Self> {
        let f = cfg.node_features;
        let c = Component::Gcn;
        Ok(GcnFusion {
            cfg: cfg.clone(),
            input_dim,
            adjacency: uniform_adjacency(cfg.nodes),
            expand: Linear::new(params, rng, "gcn.expand", c, input_dim, cfg.g2, true)?,
            w1: Linear::new(params, rng, "gcn.w1", c, f, f, false)?,
            w2: Linear::new(params, rng, "gcn.w2", c, f, f, false)?,
            out: Linear::new(params, rng, "gcn.out", c, cfg.nodes * f, cfg.hidden, true)?,
        })
    }

    /// `embeddings` are concatenated along the feature axis (`[B, G1]`).
    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, embeddings: &[Var]) -> (Var, GcnTrace) {
        let x = if embeddings.len() == 1 { embeddings[0] } else { g.concat(embeddings) };
        let b = g.shape(x)[0];
        let (n, f) = (self.cfg.nodes, self.cfg.node_features);
        let e = self.expand.forward(g, params, x);
        let nodes = g.reshape(e, &[b, n, f]);
        let o1 = self.w1.forward(g, params, nodes);
        let m1 = g.mix_nodes(o1, &self.adjacency);
        let h1 = g.relu(m1);
        let o2 = self.w2.forward(g, params, h1);
        let m2 = g.mix_nodes(o2, &self.adjacency);
        let h2 = g.relu(m2);
        let flat = g.reshape(h2, &[b, n * f]);
        let out = self.out.forward(g, params, flat);
        (
            out,
            GcnTrace {
                nodes,
                layer1_pre: o1,
                layer1_mixed: m1,
                layer2: h2,
            },
        )
    }
}
