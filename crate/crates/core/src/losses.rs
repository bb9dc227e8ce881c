//! Loss terms, class centers and pairwise gradient alignment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{optimizer_step, GradientVector, Graph, OptimizerState, ParamGrads, ParameterSet, Tensor, Var};
use crate::error::{GeegaError, Result};

/// Default EMA rate of the class-center update.
pub const CENTER_RATE: f64 = 0.5;

fn check_binary(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&y| y > 1) {
        Some(y) => Err(GeegaError::Contract(format!("label {y} is not binary"))),
        None if labels.is_empty() => Err(GeegaError::Contract("empty batch".into())),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy of logits `[B, 1]`.
pub fn bce(g: &mut Graph, logits: Var, labels: &[u8]) -> Result<Var> {
    check_binary(labels)?;
    if g.value(logits).len() != labels.len() {
        return Err(GeegaError::Contract(format!(
            "{} logits for {} labels",
            g.value(logits).len(),
            labels.len()
        )));
    }
    let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
    Ok(g.bce_with_logits(logits, &y))
}

/// Plain-value BCE, same formula as the graph op.
pub fn bce_value(logits: &[f64], labels: &[u8]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - z * y as f64 + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / logits.len() as f64
}

/// Git loss of embeddings `[B, D]` against frozen centers `[2, D]`.
pub fn git(g: &mut Graph, e: Var, labels: &[u8], centers: &Tensor) -> Result<Var> {
    check_binary(labels)?;
    let shape = g.shape(e);
    if shape.len() != 2 || shape[0] != labels.len() || centers.shape() != [2, shape[1]] {
        return Err(GeegaError::Contract(format!(
            "git loss: embeddings {:?}, {} labels, centers {:?}",
            shape,
            labels.len(),
            centers.shape()
        )));
    }
    Ok(g.git_loss(e, labels, centers))
}

/// Center term and pairwise term of the Git loss, computed directly.
pub fn git_terms(e: &Tensor, labels: &[u8], centers: &Tensor) -> (f64, f64) {
    let d = e.last_dim();
    let mut center = 0.0;
    let mut pairwise = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        let row = &e.data()[i * d..(i + 1) * d];
        let dist = |c: usize| -> f64 {
            row.iter()
                .zip(&centers.data()[c * d..(c + 1) * d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        center += 0.5 * dist(yi as usize);
        for (j, &yj) in labels.iter().enumerate() {
            if i != j && yi != yj {
                pairwise += 1.0 / (1.0 + dist(yj as usize));
            }
        }
    }
    (center, pairwise)
}

/// EMA update `c_y <- (1 - rate) c_y + rate * mean(e_i : y_i = y)` for each
/// class present in the batch.
pub fn update_centers(centers: &mut Tensor, e: &Tensor, labels: &[u8], rate: f64) -> Result<()> {
    let d = e.last_dim();
    if centers.shape() != [2, d] || e.len() != labels.len() * d {
        return Err(GeegaError::Contract(format!(
            "center update: centers {:?}, embeddings {:?}, {} labels",
            centers.shape(),
            e.shape(),
            labels.len()
        )));
    }
    check_binary(labels)?;
    for class in 0..2u8 {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.is_empty() {
            continue;
        }
        let c = &mut centers.data_mut()[class as usize * d..(class as usize + 1) * d];
        for (j, cj) in c.iter_mut().enumerate() {
            let mean = rows.iter().map(|&i| e.data()[i * d + j]).sum::<f64>() / rows.len() as f64;
            *cj = (1.0 - rate) * *cj + rate * mean;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    GcnTopo,
    GcnSpectro,
}

impl Pair {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pair::GcnTopo => "gcn-topo",
            Pair::GcnSpectro => "gcn-spectro",
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cosine between two gradients and whether they conflict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conflict {
    pub cosine: f64,
    pub conflict: bool,
    /// At least one vector was zero, so the cosine was defined as 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub epoch: usize,
    pub batch: usize,
    pub pair: Pair,
    pub cosine: f64,
    pub conflict: bool,
}

impl ConflictRecord {
    pub fn csv_header() -> &'static str {
        "epoch,batch,pair,cosine,conflict"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.9},{}",
            self.epoch,
            self.batch,
            self.pair,
            self.cosine,
            self.conflict as u8
        )
    }
}

pub fn detect_conflict(g1: &GradientVector, g2: &GradientVector) -> Result<Conflict> {
    if g1.len() != g2.len() {
        return Err(GeegaError::Contract(format!(
            "gradient lengths differ: {} vs {}",
            g1.len(),
            g2.len()
        )));
    }
    let (n1, n2) = (g1.norm(), g2.norm());
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(Conflict {
            cosine: 0.0,
            conflict: true,
            degenerate: true,
        });
    }
    let cosine = (g1.dot(g2) / (n1 * n2)).clamp(-1.0, 1.0);
    Ok(Conflict {
        cosine,
        conflict: cosine <= 0.0,
        degenerate: false,
    })
}

/// Convex weights `(alpha_gcn, alpha_other)` summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoWeights {
    pub gcn: f64,
    pub other: f64,
}

impl ParetoWeights {
    pub const EQUAL: ParetoWeights = ParetoWeights { gcn: 0.5, other: 0.5 };
}

/// Minimiser over `alpha in [0, 1]` of `|alpha g1 + (1 - alpha) g2|^2`.
pub fn min_norm_alpha(g1: &[f64], g2: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in g1.iter().zip(g2) {
        let d = b - a;
        num += d * b;
        den += d * d;
    }
    if den == 0.0 || !den.is_finite() || !num.is_finite() {
        return 0.5;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Closed-form min-norm weights, `g1 = g_gcn`, `g2 = g_other`.
pub fn pareto_weights(g_gcn: &GradientVector, g_other: &GradientVector) -> Result<ParetoWeights> {
    if g_gcn.len() != g_other.len() {
        return Err(GeegaError::Contract(format!(
            "gradient lengths differ: {} vs {}",
            g_gcn.len(),
            g_other.len()
        )));
    }
    let a = min_norm_alpha(&g_gcn.values, &g_other.values);
    Ok(ParetoWeights { gcn: a, other: 1.0 - a })
}

/// `h = 2 a_gcn g_gcn + 2 a_other g_other`.
pub fn aligned_gradient(g_gcn: &GradientVector, g_other: &GradientVector, w: ParetoWeights) -> Result<GradientVector> {
    if g_gcn.len() != g_other.len() {
        return Err(GeegaError::Contract("gradient lengths differ".into()));
    }
    if !(w.gcn >= 0.0 && w.other >= 0.0 && (w.gcn + w.other - 1.0).abs() < 1e-12) {
        return Err(GeegaError::Contract(format!("invalid weights {w:?}")));
    }
    let values = g_gcn
        .values
        .iter()
        .zip(&g_other.values)
        .map(|(a, b)| 2.0 * w.gcn * a + 2.0 * w.other * b)
        .collect();
    Ok(GradientVector::new(g_gcn.subset.clone(), values))
}

/// Outcome of aligning one gradient pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub conflict: Conflict,
    pub weights: ParetoWeights,
    pub gradient: GradientVector,
}

/// Detects a conflict and, only if there is one, reweights the pair.
pub fn align_pair(g_gcn: &GradientVector, g_other: &GradientVector) -> Result<Alignment> {
    let conflict = detect_conflict(g_gcn, g_other)?;
    let weights = if conflict.conflict {
        pareto_weights(g_gcn, g_other)?
    } else {
        ParetoWeights::EQUAL
    };
    Ok(Alignment {
        conflict,
        weights,
        gradient: aligned_gradient(g_gcn, g_other, weights)?,
    })
}

/// Replaces the summed gradient on each aligned subset and steps the optimizer.
pub fn apply_update(
    params: &mut ParameterSet,
    raw: &ParamGrads,
    aligned: &[GradientVector],
    state: &mut OptimizerState,
    lr_multiplier: f64,
) -> Result<()> {
    let mut grads = raw.clone();
    for h in aligned {
        grads.replace_subset(params, h)?;
    }
    optimizer_step(params, &grads, state, lr_multiplier)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    BceTopo,
    BceSpectro,
    BceGcn,
    GitTopo,
    GitSpectro,
    GitGcn,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::BceTopo,
        LossTerm::BceSpectro,
        LossTerm::BceGcn,
        LossTerm::GitTopo,
        LossTerm::GitSpectro,
        LossTerm::GitGcn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossTerm::BceTopo => "bce_topo",
            LossTerm::BceSpectro => "bce_spectro",
            LossTerm::BceGcn => "bce_gcn",
            LossTerm::GitTopo => "git_topo",
            LossTerm::GitSpectro => "git_spectro",
            LossTerm::GitGcn => "git_gcn",
        }
    }

    /// Terms a run with the given switches must report.
    pub fn required(use_topo: bool, use_spectro: bool, use_git: bool) -> Vec<LossTerm> {
        LossTerm::ALL
            .into_iter()
            .filter(|t| match t {
                LossTerm::BceTopo | LossTerm::GitTopo if !use_topo => false,
                LossTerm::BceSpectro | LossTerm::GitSpectro if !use_spectro => false,
                LossTerm::GitTopo | LossTerm::GitSpectro | LossTerm::GitGcn => use_git,
                _ => true,
            })
            .collect()
    }
}

/// Unit-weight sum of the loss terms with a per-term breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: Vec<(LossTerm, f64)>,
}

impl LossBreakdown {
    pub fn get(&self, term: LossTerm) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, v)| *v)
    }
}

pub fn total_loss(parts: &[(LossTerm, f64)], required: &[LossTerm]) -> Result<LossBreakdown> {
    for r in required {
        if !parts.iter().any(|(t, _)| t == r) {
            return Err(GeegaError::Contract(format!("loss term {} is missing", r.as_str())));
        }
    }
    let mut terms = parts.to_vec();
    terms.sort_by_key(|(t, _)| *t);
    for w in terms.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(GeegaError::Contract(format!("loss term {} given twice", w[0].0.as_str())));
        }
    }
    Ok(LossBreakdown {
        total: terms.iter().map(|(_, v)| v).sum(),
        terms,
    })
}
