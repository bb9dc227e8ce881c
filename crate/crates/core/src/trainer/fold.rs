use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::metrics::{metrics, threshold, Scores};
use super::{build_losses, FinalMetrics, TrainConfig};
use crate::autodiff::{
    optimizer_step, Component, GradientVector, Graph, LrSchedule, OptimizerState, ParamGrads, ParameterSet, Tensor,
};
use crate::error::{GeegaError, Result};
use crate::features::{FeatureSet, Standardizer};
use crate::losses::{
    align_pair, apply_update, detect_conflict, total_loss, update_centers, Alignment, ConflictRecord, LossBreakdown,
    LossTerm, Pair,
};
use crate::model::Model;

const EVAL_BATCH: usize = 64;
/// Every this many aligned steps the min-norm invariants are re-verified.
const SPOT_CHECK_EVERY: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub fold: usize,
    pub test_subject: Option<String>,
    pub epoch: usize,
    pub lr: f64,
    /// Batch-size weighted mean of each term over the epoch.
    pub train_loss: LossBreakdown,
    pub val_loss: Option<f64>,
    pub val: Option<Scores>,
    pub test: Option<Scores>,
    /// Conflict fraction per pair name.
    pub conflict_fraction: BTreeMap<String, f64>,
}

/// Loss and scores of a model on a feature set, in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub scores: Scores,
    pub logits: Vec<f64>,
}

pub struct FoldOutcome {
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochRecord>,
    pub conflicts: Vec<ConflictRecord>,
    /// Test scores of the selected epoch, if a test set was given.
    pub test: Option<Scores>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn evaluate(model: &Model, params: &ParameterSet, set: &FeatureSet, use_git: bool) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(GeegaError::Protocol("cannot evaluate an empty split".into()));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut sums: BTreeMap<LossTerm, f64> = BTreeMap::new();
    let mut logits = Vec::with_capacity(set.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let labels: Vec<u8> = chunk.iter().map(|&i| set.labels[i]).collect();
        let mut g = Graph::eval();
        let fwd = model.forward(&mut g, params, &set.topo_batch(chunk), &set.spectro_batch(chunk))?;
        let l = build_losses(&mut g, model, params, &fwd, &labels, use_git)?;
        for (t, v) in &l.terms {
            *sums.entry(*t).or_default() += g.value(*v).item() * chunk.len() as f64;
        }
        logits.extend_from_slice(g.value(fwd.logits_gcn).data());
    }
    let parts: Vec<(LossTerm, f64)> = sums.into_iter().map(|(t, s)| (t, s / set.len() as f64)).collect();
    Ok(Evaluation {
        loss: total_loss(&parts, &[])?,
        scores: metrics(&threshold(&logits), &set.labels)?,
        logits,
    })
}

fn check_min_norm(a: &Alignment, g1: &GradientVector, g2: &GradientVector) -> Result<()> {
    let h = &a.gradient;
    let scale = 1.0 + g1.norm().max(g2.norm());
    let tol = 1e-9 * scale * scale;
    let half = h.norm() / 2.0;
    let ok = half <= g1.norm().min(g2.norm()) + 1e-9 * scale && h.dot(g1) >= -tol && h.dot(g2) >= -tol;
    if ok {
        Ok(())
    } else {
        Err(GeegaError::Numeric(format!(
            "aligned update violates the min-norm invariants (|h/2| = {half:e}, weights {:?})",
            a.weights
        )))
    }
}

struct StepResult {
    terms: Vec<(LossTerm, f64)>,
    conflicts: Vec<(Pair, bool, f64)>,
}

/// Trainable state of one fold.
struct Learner<'a> {
    cfg: &'a TrainConfig,
    model: Model,
    params: ParameterSet,
    opt: OptimizerState,
    aligned_steps: u64,
}

impl<'a> Learner<'a> {
    fn new(cfg: &'a TrainConfig) -> Result<Self> {
        let (model, params) = Model::new(&cfg.model_config(), cfg.seed)?;
        let opt = OptimizerState::adam(&params, cfg.lr, cfg.weight_decay);
        Ok(Learner {
            cfg,
            model,
            params,
            opt,
            aligned_steps: 0,
        })
    }

    fn step(&mut self, topo: &Tensor, spectro: &Tensor, labels: &[u8], seed: u64, lr_mult: f64) -> Result<StepResult> {
        let mut g = Graph::new(true, seed);
        let fwd = self.model.forward(&mut g, &self.params, topo, spectro)?;
        let l = build_losses(&mut g, &self.model, &self.params, &fwd, labels, self.cfg.use_git)?;
        let mut terms = Vec::with_capacity(l.terms.len());
        for &(t, v) in &l.terms {
            let x = g.value(v).item();
            if !x.is_finite() {
                return Err(GeegaError::Numeric(format!("loss term {} became {x}", t.as_str())));
            }
            terms.push((t, x));
        }
        let mut pairs = Vec::new();
        if let Some(v) = l.topo {
            pairs.push((Pair::GcnTopo, Component::TTopo, v));
        }
        if let Some(v) = l.spectro {
            pairs.push((Pair::GcnSpectro, Component::TSpectro, v));
        }
        let mut conflicts = Vec::with_capacity(pairs.len());
        let finite = |grads: &ParamGrads, what: &str| {
            if grads.is_finite() {
                Ok(())
            } else {
                Err(GeegaError::Numeric(format!("gradient of {what} is not finite")))
            }
        };
        if self.cfg.use_align {
            let g_gcn = g.backward(l.gcn)?.param_grads(&g, &self.params);
            finite(&g_gcn, "the gcn loss")?;
            let mut raw = g_gcn.clone();
            let mut aligned = Vec::with_capacity(pairs.len());
            let check = self.aligned_steps % SPOT_CHECK_EVERY == 0;
            for (pair, comp, loss) in pairs {
                let g_other = g.backward(loss)?.param_grads(&g, &self.params);
                finite(&g_other, pair.as_str())?;
                raw.add_assign(&g_other);
                let v1 = g_gcn.flatten(&self.params, &[comp]);
                let v2 = g_other.flatten(&self.params, &[comp]);
                let a = align_pair(&v1, &v2)?;
                if check && a.conflict.conflict && !a.conflict.degenerate {
                    check_min_norm(&a, &v1, &v2)?;
                }
                conflicts.push((pair, a.conflict.conflict, a.conflict.cosine));
                aligned.push(a.gradient);
            }
            self.aligned_steps += 1;
            apply_update(&mut self.params, &raw, &aligned, &mut self.opt, lr_mult)?;
        } else {
            let total = g.backward(l.total)?.param_grads(&g, &self.params);
            finite(&total, "the total loss")?;
            for (pair, comp, loss) in pairs {
                // only the pair's own branch loss and the gcn loss reach its encoder
                let other = g.backward(loss)?.param_grads(&g, &self.params).flatten(&self.params, &[comp]);
                let sum = total.flatten(&self.params, &[comp]);
                let gcn = GradientVector::new(
                    vec![comp],
                    sum.values.iter().zip(&other.values).map(|(s, o)| s - o).collect(),
                );
                let c = detect_conflict(&gcn, &other)?;
                conflicts.push((pair, c.conflict, c.cosine));
            }
            optimizer_step(&mut self.params, &total, &mut self.opt, lr_mult)?;
        }
        if self.cfg.use_git {
            let c = self.model.centers.clone();
            let sites = [(c.topo, fwd.e_freq), (c.spectro, fwd.e_time_freq), (Some(c.gcn), Some(fwd.e_gcn))];
            for (center, e) in sites {
                if let (Some(center), Some(e)) = (center, e) {
                    update_centers(self.params.value_mut(center), g.value(e), labels, self.cfg.center_rate)?;
                }
            }
        }
        Ok(StepResult { terms, conflicts })
    }

    fn checkpoint(&self, standardizer: Option<Standardizer>, set: &FeatureSet) -> Checkpoint {
        Checkpoint {
            model: self.model.cfg.clone(),
            standardizer,
            band_names: set.band_names.clone(),
            channel_names: set.channel_names.clone(),
            params: self.params.clone(),
        }
    }
}

/// Trains one model. `val` drives the plateau schedule (the training loss
/// does when it is empty); `test`, if given, is scored after every epoch.
pub fn train_fold(
    train: &FeatureSet,
    val: &FeatureSet,
    test: Option<&FeatureSet>,
    cfg: &TrainConfig,
    fold: usize,
) -> Result<FoldOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GeegaError::Protocol("training split is empty".into()));
    }
    if test.is_some_and(|t| t.is_empty()) {
        return Err(GeegaError::Protocol("test split is empty".into()));
    }
    let standardizer = if cfg.normalize { Some(Standardizer::fit(train)?) } else { None };
    let prepare = |set: &FeatureSet| {
        let mut s = set.clone();
        if let Some(st) = &standardizer {
            st.apply(&mut s);
        }
        s
    };
    let (train, val, test) = (prepare(train), prepare(val), test.map(prepare));
    let test_subject = test.as_ref().and_then(|t| t.subjects.first().cloned());

    let mut learner = Learner::new(cfg)?;
    let mut schedule = LrSchedule::new(cfg.schedule);
    let required = LossTerm::required(cfg.use_topo, cfg.use_spectro, cfg.use_git);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut conflicts = Vec::new();
    let mut best: Option<(f64, Option<Scores>, Checkpoint)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr_mult = schedule.multiplier(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, fold as u64, epoch as u64]));
        order.shuffle(&mut rng);
        let mut sums: BTreeMap<LossTerm, f64> = BTreeMap::new();
        let mut pair_counts: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let labels: Vec<u8> = chunk.iter().map(|&i| train.labels[i]).collect();
            let seed = derive_seed(&[cfg.seed, fold as u64, epoch as u64, b as u64, 1]);
            let r = learner
                .step(&train.topo_batch(chunk), &train.spectro_batch(chunk), &labels, seed, lr_mult)
                .map_err(|e| match e {
                    GeegaError::Numeric(m) => GeegaError::Numeric(format!("fold {fold} epoch {epoch} batch {b}: {m}")),
                    other => other,
                })?;
            for (t, v) in r.terms {
                *sums.entry(t).or_default() += v * chunk.len() as f64;
            }
            for (pair, conflict, cosine) in r.conflicts {
                let c = pair_counts.entry(pair.as_str()).or_default();
                c.0 += 1;
                c.1 += conflict as usize;
                conflicts.push(ConflictRecord {
                    epoch,
                    batch: b,
                    pair,
                    cosine,
                    conflict,
                });
            }
        }
        let parts: Vec<(LossTerm, f64)> = sums.into_iter().map(|(t, s)| (t, s / train.len() as f64)).collect();
        let train_loss = total_loss(&parts, &required)?;
        let val_eval = match val.is_empty() {
            true => None,
            false => Some(evaluate(&learner.model, &learner.params, &val, cfg.use_git)?),
        };
        let monitored = val_eval.as_ref().map_or(train_loss.total, |v| v.loss.total);
        schedule.observe(epoch, monitored);
        let test_scores = match &test {
            Some(t) => Some(evaluate(&learner.model, &learner.params, t, cfg.use_git)?.scores),
            None => None,
        };
        if cfg.final_metrics == FinalMetrics::BestValidation && best.as_ref().map_or(true, |b| monitored < b.0) {
            best = Some((monitored, test_scores, learner.checkpoint(standardizer.clone(), &train)));
        }
        log::info!(
            "fold {fold} epoch {epoch}: loss {:.4} val {} test {}",
            train_loss.total,
            val_eval.as_ref().map_or("-".into(), |v| format!("{:.4}", v.loss.total)),
            test_scores.map_or("-".into(), |s| format!("{:.2}", s.accuracy)),
        );
        epochs.push(EpochRecord {
            fold,
            test_subject: test_subject.clone(),
            epoch,
            lr: cfg.lr * lr_mult,
            train_loss,
            val_loss: val_eval.as_ref().map(|v| v.loss.total),
            val: val_eval.map(|v| v.scores),
            test: test_scores,
            conflict_fraction: pair_counts
                .into_iter()
                .map(|(p, (n, c))| (p.to_string(), c as f64 / n as f64))
                .collect(),
        });
    }
    let (test, checkpoint) = match best {
        Some((_, scores, ck)) => (scores, ck),
        None => (
            epochs.last().and_then(|e| e.test),
            learner.checkpoint(standardizer, &train),
        ),
    };
    Ok(FoldOutcome {
        model: learner.model,
        checkpoint,
        epochs,
        conflicts,
        test,
    })
}
