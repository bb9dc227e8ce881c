//! Two transformer encoders, graph-convolutional fusion and three heads.

mod encoder;
mod gcn;
mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{patchify, Encoder, EncoderTrace};
pub use gcn::{uniform_adjacency, GcnFusion, GcnTrace};
pub use layers::{LayerNorm, Linear, LN_EPS};

use crate::autodiff::{Component, Graph, ParamId, ParameterSet, Tensor, Var};
use crate::error::{GeegaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    ClassToken,
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub blocks: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub patch_size: usize,
    pub readout: Readout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Width after the expanding projection; must equal `nodes * node_features`.
    pub g2: usize,
    pub nodes: usize,
    pub node_features: usize,
    /// Output width `H`.
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    /// Topography map depth `k` (one map per band).
    pub topo_channels: usize,
    /// Spectrogram depth `c` (one map per EEG channel).
    pub spectro_channels: usize,
    pub encoder: EncoderConfig,
    pub gcn: GcnConfig,
    pub head: HeadConfig,
    pub use_topo: bool,
    pub use_spectro: bool,
}

impl ModelConfig {
    /// Full-size network: 3 blocks, 8 heads, width 512, MLP 1024,
    /// G1 1024, G2 1536, 6 nodes of 256 features, H 512.
    pub fn large(spectro_channels: usize) -> Self {
        ModelConfig {
            image_size: 32,
            topo_channels: 5,
            spectro_channels,
            encoder: EncoderConfig {
                blocks: 3,
                heads: 8,
                embed_dim: 512,
                mlp_hidden: 1024,
                dropout: 0.1,
                patch_size: 8,
                readout: Readout::ClassToken,
            },
            gcn: GcnConfig {
                g2: 1536,
                nodes: 6,
                node_features: 256,
                hidden: 512,
            },
            head: HeadConfig {
                hidden: 128,
                dropout: 0.25,
            },
            use_topo: true,
            use_spectro: true,
        }
    }

    /// Small network for single-core runs.
    pub fn desk(spectro_channels: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                blocks: 1,
                heads: 4,
                embed_dim: 64,
                mlp_hidden: 128,
                ..ModelConfig::large(spectro_channels).encoder
            },
            gcn: GcnConfig {
                g2: 64,
                nodes: 4,
                node_features: 16,
                hidden: 32,
            },
            ..ModelConfig::large(spectro_channels)
        }
    }

    /// Minimal network for finite-difference checks.
    pub fn tiny(spectro_channels: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                blocks: 1,
                heads: 2,
                embed_dim: 16,
                mlp_hidden: 32,
                ..ModelConfig::large(spectro_channels).encoder
            },
            gcn: GcnConfig {
                g2: 16,
                nodes: 2,
                node_features: 8,
                hidden: 8,
            },
            head: HeadConfig {
                hidden: 8,
                dropout: 0.25,
            },
            ..ModelConfig::large(spectro_channels)
        }
    }

    /// Width of the concatenated embeddings entering the fusion block.
    pub fn g1(&self) -> usize {
        self.encoder.embed_dim * (self.use_topo as usize + self.use_spectro as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(GeegaError::Config {
                key: key.into(),
                message,
            })
        };
        let e = &self.encoder;
        if e.heads == 0 || e.embed_dim % e.heads != 0 {
            return bad("encoder.heads", format!("embed dim {} not divisible by {} heads", e.embed_dim, e.heads));
        }
        if e.patch_size == 0 || self.image_size % e.patch_size != 0 {
            return bad(
                "encoder.patch_size",
                format!("image size {} not divisible by patch size {}", self.image_size, e.patch_size),
            );
        }
        if e.blocks == 0 || e.mlp_hidden == 0 {
            return bad("encoder.blocks", "encoder needs at least one block and a non-empty MLP".into());
        }
        let g = &self.gcn;
        if g.g2 != g.nodes * g.node_features || g.nodes == 0 {
            return bad(
                "gcn.g2",
                format!("G2 = {} must equal N x F = {} x {}", g.g2, g.nodes, g.node_features),
            );
        }
        if g.hidden == 0 || self.head.hidden == 0 {
            return bad("gcn.hidden", "hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&e.dropout) || !(0.0..1.0).contains(&self.head.dropout) {
            return bad("encoder.dropout", "dropout must lie in [0, 1)".into());
        }
        if !self.use_topo && !self.use_spectro {
            return bad("ablate", "at least one input domain must stay enabled".into());
        }
        if self.topo_channels == 0 || self.spectro_channels == 0 {
            return bad("model.channels", "input depths must be positive".into());
        }
        Ok(())
    }
}

/// Linear -> ReLU -> dropout -> Linear to one logit.
#[derive(Clone, Debug)]
pub struct Head {
    pub fc1: Linear,
    pub fc2: Linear,
    pub dropout: f64,
}

impl Head {
    pub fn new(
        params: &mut ParameterSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        component: Component,
        input: usize,
        cfg: &HeadConfig,
    ) -> Result<Self> {
        Ok(Head {
            fc1: Linear::new(params, rng, &format!("{name}.fc1"), component, input, cfg.hidden, true)?,
            fc2: Linear::new(params, rng, &format!("{name}.fc2"), component, cfg.hidden, 1, true)?,
            dropout: cfg.dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, e: Var) -> Var {
        let h = self.fc1.forward(g, params, e);
        let h = g.relu(h);
        let h = g.dropout(h, self.dropout);
        self.fc2.forward(g, params, h)
    }
}

/// Class-center parameters `[2, D]` for each embedding site.
#[derive(Clone, Debug)]
pub struct CenterIds {
    pub topo: Option<ParamId>,
    pub spectro: Option<ParamId>,
    pub gcn: ParamId,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub t_topo: Option<Encoder>,
    pub t_spectro: Option<Encoder>,
    pub gcn: GcnFusion,
    pub head_topo: Option<Head>,
    pub head_spectro: Option<Head>,
    pub head_gcn: Head,
    pub centers: CenterIds,
}

/// Graph nodes of one forward pass. Disabled domains are `None`.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub e_freq: Option<Var>,
    pub e_time_freq: Option<Var>,
    pub e_gcn: Var,
    pub logits_topo: Option<Var>,
    pub logits_spectro: Option<Var>,
    pub logits_gcn: Var,
}

/// Materialised forward results: embeddings `[B, D]`, logits `[B, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub e_freq: Option<Tensor>,
    pub e_time_freq: Option<Tensor>,
    pub e_gcn: Tensor,
    pub logits_topo: Option<Tensor>,
    pub logits_spectro: Option<Tensor>,
    pub logits_gcn: Tensor,
}

impl ForwardVars {
    pub fn values(&self, g: &Graph) -> ForwardOutputs {
        let get = |v: Option<Var>| v.map(|v| g.value(v).clone());
        ForwardOutputs {
            e_freq: get(self.e_freq),
            e_time_freq: get(self.e_time_freq),
            e_gcn: g.value(self.e_gcn).clone(),
            logits_topo: get(self.logits_topo),
            logits_spectro: get(self.logits_spectro),
            logits_gcn: g.value(self.logits_gcn).clone(),
        }
    }
}

impl ForwardOutputs {
    pub fn is_finite(&self) -> bool {
        [&self.e_freq, &self.e_time_freq, &self.logits_topo, &self.logits_spectro]
            .iter()
            .all(|t| t.as_ref().map_or(true, Tensor::is_finite))
            && self.e_gcn.is_finite()
            && self.logits_gcn.is_finite()
    }
}

impl Model {
    /// Builds the network and its parameters from `seed`.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<(Model, ParameterSet)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let d = cfg.encoder.embed_dim;
        let s = cfg.image_size;
        let t_topo = if cfg.use_topo {
            Some(Encoder::new(&mut params, &mut rng, "t_topo", Component::TTopo, &cfg.encoder, cfg.topo_channels, s)?)
        } else {
            None
        };
        let t_spectro = if cfg.use_spectro {
            Some(Encoder::new(
                &mut params,
                &mut rng,
                "t_spectro",
                Component::TSpectro,
                &cfg.encoder,
                cfg.spectro_channels,
                s,
            )?)
        } else {
            None
        };
        let gcn = GcnFusion::new(&mut params, &mut rng, &cfg.gcn, cfg.g1())?;
        let head_topo = match cfg.use_topo {
            true => Some(Head::new(&mut params, &mut rng, "head_topo", Component::HeadTopo, d, &cfg.head)?),
            false => None,
        };
        let head_spectro = match cfg.use_spectro {
            true => Some(Head::new(&mut params, &mut rng, "head_spectro", Component::HeadSpectro, d, &cfg.head)?),
            false => None,
        };
        let head_gcn = Head::new(&mut params, &mut rng, "head_gcn", Component::HeadGcn, cfg.gcn.hidden, &cfg.head)?;
        let mut center = |name: &str, width: usize| params.add(name, Component::Centers, Tensor::zeros(&[2, width]), false);
        let centers = CenterIds {
            topo: if cfg.use_topo { Some(center("centers.topo", d)?) } else { None },
            spectro: if cfg.use_spectro { Some(center("centers.spectro", d)?) } else { None },
            gcn: center("centers.gcn", cfg.gcn.hidden)?,
        };
        Ok((
            Model {
                cfg: cfg.clone(),
                t_topo,
                t_spectro,
                gcn,
                head_topo,
                head_spectro,
                head_gcn,
                centers,
            },
            params,
        ))
    }

    pub fn forward(&self, g: &mut Graph, params: &ParameterSet, topo: &Tensor, spectro: &Tensor) -> Result<ForwardVars> {
        let batch = |t: &Tensor| t.shape().first().copied();
        if self.cfg.use_topo && self.cfg.use_spectro && batch(topo) != batch(spectro) {
            return Err(GeegaError::Contract(format!(
                "batch sizes differ: topo {:?}, spectro {:?}",
                topo.shape(),
                spectro.shape()
            )));
        }
        let e_freq = match &self.t_topo {
            Some(enc) => Some(enc.forward(g, params, topo)?.0),
            None => None,
        };
        let e_time_freq = match &self.t_spectro {
            Some(enc) => Some(enc.forward(g, params, spectro)?.0),
            None => None,
        };
        let parts: Vec<Var> = e_freq.iter().chain(e_time_freq.iter()).copied().collect();
        let (e_gcn, _) = self.gcn.forward(g, params, &parts);
        let logits_topo = self.head_topo.as_ref().zip(e_freq).map(|(h, e)| h.forward(g, params, e));
        let logits_spectro = self.head_spectro.as_ref().zip(e_time_freq).map(|(h, e)| h.forward(g, params, e));
        let logits_gcn = self.head_gcn.forward(g, params, e_gcn);
        Ok(ForwardVars {
            e_freq,
            e_time_freq,
            e_gcn,
            logits_topo,
            logits_spectro,
            logits_gcn,
        })
    }

    /// Eval-mode forward pass returning plain tensors.
    pub fn predict(&self, params: &ParameterSet, topo: &Tensor, spectro: &Tensor) -> Result<ForwardOutputs> {
        let mut g = Graph::eval();
        let vars = self.forward(&mut g, params, topo, spectro)?;
        Ok(vars.values(&g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_parts(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn token_counts() {
        let mut cfg = ModelConfig::tiny(4);
        let (m, p) = Model::new(&cfg, 0).unwrap();
        let mut g = Graph::eval();
        let t = m.t_topo.as_ref().unwrap().tokenize(&mut g, &p, &random(&[2, 5, 32, 32], 1)).unwrap();
        assert_eq!(g.shape(t), &[2, 17, 16]);
        cfg.encoder.patch_size = 16;
        cfg.spectro_channels = 22;
        let (m, p) = Model::new(&cfg, 0).unwrap();
        let t = m.t_spectro.as_ref().unwrap().tokenize(&mut g, &p, &random(&[1, 22, 32, 32], 1)).unwrap();
        assert_eq!(g.shape(t), &[1, 5, 16]);
        cfg.encoder.patch_size = 5;
        assert!(matches!(Model::new(&cfg, 0), Err(GeegaError::Config { .. })));
        assert!(patchify(&random(&[1, 1, 32, 32], 0), 6).is_err());
    }

    #[test]
    fn patchify_layout() {
        let x = Tensor::from_parts(&[1, 2, 4, 4], (0..32).map(f64::from).collect());
        let p = patchify(&x, 2).unwrap();
        assert_eq!(p.shape(), &[1, 4, 8]);
        // patch 1 = top-right: channel 0 rows 0-1 cols 2-3, then channel 1
        assert_eq!(&p.data()[8..16], &[2.0, 3.0, 6.0, 7.0, 18.0, 19.0, 22.0, 23.0]);
    }

    #[test]
    fn zero_input_tokens_are_position_plus_bias() {
        let cfg = ModelConfig::tiny(4);
        let (m, mut p) = Model::new(&cfg, 3).unwrap();
        let enc = m.t_topo.as_ref().unwrap();
        let bias_id = p.id("t_topo.patch.b").unwrap();
        *p.value_mut(bias_id) = random(&[16], 9);
        let mut g = Graph::eval();
        let t = enc.tokenize(&mut g, &p, &Tensor::zeros(&[2, 5, 32, 32])).unwrap();
        let pos = p.value(enc.pos).data();
        let cls = p.value(enc.class_token).data();
        let bias = p.value(bias_id).data();
        let v = g.value(t).data();
        for b in 0..2 {
            for tok in 0..17 {
                for j in 0..16 {
                    let content = if tok == 0 { cls[j] } else { bias[j] };
                    let want = pos[tok * 16 + j] + content;
                    assert!((v[(b * 17 + tok) * 16 + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = ModelConfig::tiny(4);
        let (m, p) = Model::new(&cfg, 5).unwrap();
        let mut g = Graph::eval();
        let (_, trace) = m.t_topo.as_ref().unwrap().forward(&mut g, &p, &random(&[3, 5, 32, 32], 2)).unwrap();
        for &a in &trace.attention {
            for row in g.value(a).data().chunks(17) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn permuting_patch_tokens_with_positions_keeps_output() {
        let cfg = ModelConfig::tiny(4);
        let (m, p) = Model::new(&cfg, 6).unwrap();
        let enc = m.t_topo.as_ref().unwrap();
        let mut g = Graph::eval();
        let tokens = enc.tokenize(&mut g, &p, &random(&[2, 5, 32, 32], 4)).unwrap();
        let (e, _) = enc.encode_tokens(&mut g, &p, tokens);
        let base = g.value(e).clone();
        // reverse the 16 patch tokens, keep the class token first
        let tv = g.value(tokens).clone();
        let mut perm = Vec::with_capacity(tv.len());
        for b in 0..2 {
            let seq = &tv.data()[b * 17 * 16..(b + 1) * 17 * 16];
            perm.extend_from_slice(&seq[..16]);
            for tok in (1..17).rev() {
                perm.extend_from_slice(&seq[tok * 16..(tok + 1) * 16]);
            }
        }
        let pt = g.constant(Tensor::from_parts(&[2, 17, 16], perm));
        let (e2, _) = enc.encode_tokens(&mut g, &p, pt);
        assert!(g.value(e2).max_abs_diff(&base) < 1e-10);
    }

    #[test]
    fn uniform_adjacency_equalises_nodes() {
        let cfg = ModelConfig::tiny(4);
        let (m, p) = Model::new(&cfg, 7).unwrap();
        let mut g = Graph::eval();
        let e = g.constant(random(&[3, cfg.g1()], 8));
        let (_, trace) = m.gcn.forward(&mut g, &p, &[e]);
        let mixed = g.value(trace.layer1_mixed);
        let f = cfg.gcn.node_features;
        for b in 0..3 {
            let base = b * cfg.gcn.nodes * f;
            for n in 1..cfg.gcn.nodes {
                for j in 0..f {
                    assert!((mixed.data()[base + n * f + j] - mixed.data()[base + j]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_embeddings_give_constant_fusion_output() {
        let cfg = ModelConfig::tiny(4);
        let (m, mut p) = Model::new(&cfg, 8).unwrap();
        let bid = p.id("gcn.expand.b").unwrap();
        *p.value_mut(bid) = random(&[cfg.gcn.g2], 1);
        let mut g = Graph::eval();
        let e = g.constant(Tensor::zeros(&[4, cfg.g1()]));
        let (out, _) = m.gcn.forward(&mut g, &p, &[e]);
        let h = cfg.gcn.hidden;
        let v = g.value(out).data();
        assert!(v[..h].iter().any(|x| x.abs() > 0.0));
        for b in 1..4 {
            assert_eq!(&v[b * h..(b + 1) * h], &v[..h]);
        }
    }

    #[test]
    fn layer_one_is_linear_in_w1() {
        let cfg = ModelConfig::tiny(4);
        let (m, mut p) = Model::new(&cfg, 9).unwrap();
        let input = random(&[2, cfg.g1()], 3);
        let pre = |p: &ParameterSet| {
            let mut g = Graph::eval();
            let e = g.constant(input.clone());
            let (_, t) = m.gcn.forward(&mut g, p, &[e]);
            g.value(t.layer1_pre).clone()
        };
        let a = pre(&p);
        let w1 = m.gcn.w1.w;
        let doubled: Vec<f64> = p.value(w1).data().iter().map(|v| 2.0 * v).collect();
        p.value_mut(w1).data_mut().copy_from_slice(&doubled);
        let b = pre(&p);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn head_zero_weights_give_final_bias() {
        let cfg = ModelConfig::tiny(4);
        let (m, mut p) = Model::new(&cfg, 10).unwrap();
        for name in ["head_gcn.fc1.w", "head_gcn.fc2.w"] {
            let id = p.id(name).unwrap();
            p.value_mut(id).data_mut().fill(0.0);
        }
        let bid = p.id("head_gcn.fc2.b").unwrap();
        p.value_mut(bid).data_mut()[0] = 0.37;
        let out = m.predict(&p, &random(&[2, 5, 32, 32], 1), &random(&[2, 4, 32, 32], 2)).unwrap();
        assert_eq!(out.logits_gcn.data(), &[0.37, 0.37]);
        let again = m.predict(&p, &random(&[2, 5, 32, 32], 1), &random(&[2, 4, 32, 32], 2)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn batch_forward_matches_single_samples() {
        let cfg = ModelConfig::tiny(4);
        let (m, p) = Model::new(&cfg, 11).unwrap();
        let topo = random(&[3, 5, 32, 32], 5);
        let spec = random(&[3, 4, 32, 32], 6);
        let all = m.predict(&p, &topo, &spec).unwrap();
        for i in 0..3 {
            let one = m.predict(&p, &topo.slice_rows(i, i + 1), &spec.slice_rows(i, i + 1)).unwrap();
            assert!((one.logits_gcn.data()[0] - all.logits_gcn.data()[i]).abs() < 1e-5);
            let d = cfg.gcn.hidden;
            for j in 0..d {
                assert!((one.e_gcn.data()[j] - all.e_gcn.data()[i * d + j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_domain_models() {
        let mut cfg = ModelConfig::tiny(4);
        cfg.use_topo = false;
        let (m, p) = Model::new(&cfg, 12).unwrap();
        assert_eq!(m.gcn.input_dim, 16);
        assert_eq!(p.count(&[Component::TTopo, Component::HeadTopo]), 0);
        let out = m.predict(&p, &Tensor::zeros(&[0]), &random(&[2, 4, 32, 32], 1)).unwrap();
        assert!(out.e_freq.is_none() && out.logits_topo.is_none());
        assert_eq!(out.logits_gcn.shape(), &[2, 1]);
        cfg.use_spectro = false;
        assert!(Model::new(&cfg, 0).is_err());
    }

    #[test]
    fn gcn_shape_contract() {
        let mut cfg = ModelConfig::large(4);
        cfg.gcn.g2 = 1000;
        assert!(matches!(cfg.validate(), Err(GeegaError::Config { .. })));
        assert_eq!(ModelConfig::large(22).g1(), 1024);
    }
}
