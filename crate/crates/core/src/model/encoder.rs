use rand_chacha::ChaCha8Rng;

use super::layers::{normal_tensor, LayerNorm, Linear};
use super::{EncoderConfig, Readout};
use crate::autodiff::{Component, Graph, ParamId, ParameterSet, Tensor, Var};
use crate::error::{GeegaError, Result};

/// Cuts `[B, ch, S, S]` into `[B, (S/p)^2, ch*p*p]` patch vectors. Patches
/// are numbered row-major; each vector is ordered (channel, row, column).
pub fn patchify(x: &Tensor, patch: usize) -> Result<Tensor> {
    if x.rank() != 4 || x.shape()[2] != x.shape()[3] {
        return Err(GeegaError::Contract(format!("expected [B, ch, S, S] input, got {:?}", x.shape())));
    }
    let (b, ch, s) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if patch == 0 || s % patch != 0 {
        return Err(GeegaError::Config {
            key: "encoder.patch_size".into(),
            message: format!("image size {s} is not divisible by patch size {patch}"),
        });
    }
    let per_side = s / patch;
    let width = ch * patch * patch;
    let mut out = Vec::with_capacity(x.len());
    let d = x.data();
    for bi in 0..b {
        for py in 0..per_side {
            for px in 0..per_side {
                for c in 0..ch {
                    for r in 0..patch {
                        let row = py * patch + r;
                        let start = ((bi * ch + c) * s + row) * s + px * patch;
                        out.extend_from_slice(&d[start..start + patch]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, per_side * per_side, width], out)
}

#[derive(Clone, Debug)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Patch tokenizer plus a stack of pre-norm transformer blocks.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub in_channels: usize,
    pub image_size: usize,
    proj: Linear,
    pub class_token: ParamId,
    pub pos: ParamId,
    blocks: Vec<Block>,
    ln_final: LayerNorm,
}

/// Intermediate values exposed for inspection.
pub struct EncoderTrace {
    pub tokens: Var,
    /// Attention probabilities `[B*heads, T, T]` per block.
    pub attention: Vec<Var>,
}

impl Encoder {
    pub fn new(
        params: &mut ParameterSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        component: Component,
        cfg: &EncoderConfig,
        in_channels: usize,
        image_size: usize,
    ) -> Result<Self> {
        let d = cfg.embed_dim;
        let n_tokens = (image_size / cfg.patch_size).pow(2) + 1;
        let proj = Linear::new(
            params,
            rng,
            &format!("{prefix}.patch"),
            component,
            in_channels * cfg.patch_size * cfg.patch_size,
            d,
            true,
        )?;
        let class_token = params.add(&format!("{prefix}.cls"), component, normal_tensor(rng, &[d], 0.02), false)?;
        let pos = params.add(&format!("{prefix}.pos"), component, normal_tensor(rng, &[n_tokens, d], 0.02), false)?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let p = format!("{prefix}.block{i}");
            blocks.push(Block {
                ln1: LayerNorm::new(params, &format!("{p}.ln1"), component, d)?,
                q: Linear::new(params, rng, &format!("{p}.q"), component, d, d, true)?,
                k: Linear::new(params, rng, &format!("{p}.k"), component, d, d, true)?,
                v: Linear::new(params, rng, &format!("{p}.v"), component, d, d, true)?,
                o: Linear::new(params, rng, &format!("{p}.o"), component, d, d, true)?,
                ln2: LayerNorm::new(params, &format!("{p}.ln2"), component, d)?,
                fc1: Linear::new(params, rng, &format!("{p}.fc1"), component, d, cfg.mlp_hidden, true)?,
                fc2: Linear::new(params, rng, &format!("{p}.fc2"), component, cfg.mlp_hidden, d, true)?,
            });
        }
        let ln_final = LayerNorm::new(params, &format!("{prefix}.ln_final"), component, d)?;
        Ok(Encoder {
            cfg: cfg.clone(),
            in_channels,
            image_size,
            proj,
            class_token,
            pos,
            blocks,
            ln_final,
        })
    }

    pub fn n_tokens(&self) -> usize {
        (self.image_size / self.cfg.patch_size).pow(2) + 1
    }

    /// Patch projection, class token and positional encoding: `[B, T, D]`.
    pub fn tokenize(&self, g: &mut Graph, params: &ParameterSet, x: &Tensor) -> Result<Var> {
        if x.rank() != 4 || x.shape()[1] != self.in_channels || x.shape()[2] != self.image_size {
            return Err(GeegaError::Contract(format!(
                "encoder expects [B, {}, {s}, {s}] input, got {:?}",
                self.in_channels,
                x.shape(),
                s = self.image_size
            )));
        }
        let patches = g.constant(patchify(x, self.cfg.patch_size)?);
        let emb = self.proj.forward(g, params, patches);
        let cls = g.param(params, self.class_token);
        let seq = g.prepend_row(emb, cls);
        let pos = g.param(params, self.pos);
        Ok(g.add_broadcast(seq, pos))
    }

    /// Runs the blocks over an already tokenized sequence.
    pub fn encode_tokens(&self, g: &mut Graph, params: &ParameterSet, tokens: Var) -> (Var, Vec<Var>) {
        let shape = g.shape(tokens).to_vec();
        let (b, t, d) = (shape[0], shape[1], shape[2]);
        let h = self.cfg.heads;
        let dh = d / h;
        let p = self.cfg.dropout;
        let mut x = g.dropout(tokens, p);
        let mut attention = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let n1 = blk.ln1.forward(g, params, x);
            let split = |g: &mut Graph, lin: &Linear| {
                let y = lin.forward(g, params, n1);
                let y = g.reshape(y, &[b, t, h, dh]);
                let y = g.permute(y, &[0, 2, 1, 3]);
                g.reshape(y, &[b * h, t, dh])
            };
            let q = split(g, &blk.q);
            let k = split(g, &blk.k);
            let v = split(g, &blk.v);
            let scores = g.bmm(q, k, false, true);
            let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            let att = g.softmax(scores);
            attention.push(att);
            let ctx = g.bmm(att, v, false, false);
            let ctx = g.reshape(ctx, &[b, h, t, dh]);
            let ctx = g.permute(ctx, &[0, 2, 1, 3]);
            let ctx = g.reshape(ctx, &[b, t, d]);
            let out = blk.o.forward(g, params, ctx);
            let out = g.dropout(out, p);
            x = g.add(x, out);
            let n2 = blk.ln2.forward(g, params, x);
            let m = blk.fc1.forward(g, params, n2);
            let m = g.relu(m);
            let m = blk.fc2.forward(g, params, m);
            let m = g.dropout(m, p);
            x = g.add(x, m);
        }
        let x = self.ln_final.forward(g, params, x);
        let e = match self.cfg.readout {
            Readout::ClassToken => g.select_row(x, 0),
            Readout::MeanPool => g.mean_rows(x),
        };
        (e, attention)
    }

    /// `[B, ch, S, S] -> [B, D]` embedding plus a trace of the internals.
    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, x: &Tensor) -> Result<(Var, EncoderTrace)> {
        let tokens = self.tokenize(g, params, x)?;
        let (e, attention) = self.encode_tokens(g, params, tokens);
        Ok((e, EncoderTrace { tokens, attention }))
    }
}
