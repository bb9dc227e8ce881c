//! Training loop, leave-one-subject-out evaluation, metrics and conflict reports.

mod checkpoint;
mod fold;
mod loso;
mod metrics;
mod report;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use fold::{evaluate, train_fold, EpochRecord, Evaluation, FoldOutcome};
pub use loso::{loso, split_validation, FoldMetrics, RunMetrics, RunSummary};
pub use metrics::{metrics, threshold, MeanStd, Scores};
pub use report::{conflict_log_csv, conflict_report, heatmap_csv, mean_fraction, parse_conflict_log, ConflictFraction};

use crate::autodiff::{Graph, ParameterSet, ScheduleConfig, Var};
use crate::error::{GeegaError, Result};
use crate::losses::{bce, git, LossTerm, CENTER_RATE};
use crate::model::{ForwardVars, Model, ModelConfig};

/// Which epoch's test scores a fold reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalMetrics {
    LastEpoch,
    /// The epoch with the lowest validation loss.
    BestValidation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleConfig,
    pub seed: u64,
    pub use_topo: bool,
    pub use_spectro: bool,
    pub use_git: bool,
    pub use_align: bool,
    /// EMA rate of the class centers.
    pub center_rate: f64,
    /// Share of each class held out of the training split for the plateau monitor.
    pub val_fraction: f64,
    pub final_metrics: FinalMetrics,
    /// Standardize each map channel with statistics of the training split.
    pub normalize: bool,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Full-size network and its default hyperparameters.
    pub fn large(spectro_channels: usize) -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 25,
            lr: 1e-4,
            weight_decay: 1e-5,
            schedule: ScheduleConfig::default(),
            seed: 0,
            use_topo: true,
            use_spectro: true,
            use_git: true,
            use_align: true,
            center_rate: CENTER_RATE,
            val_fraction: 0.2,
            final_metrics: FinalMetrics::LastEpoch,
            normalize: true,
            model: ModelConfig::large(spectro_channels),
        }
    }

    /// Desk-scale network; smaller batches so the short synthetic runs take
    /// enough updates.
    pub fn desk(spectro_channels: usize) -> Self {
        TrainConfig {
            batch_size: 8,
            model: ModelConfig::desk(spectro_channels),
            ..TrainConfig::large(spectro_channels)
        }
    }

    /// Model configuration with the domain switches applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            use_topo: self.use_topo,
            use_spectro: self.use_spectro,
            ..self.model.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(GeegaError::config(key, msg));
        if self.batch_size == 0 {
            return bad("train.batch_size", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("train.epochs", "must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("train.lr", "must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("train.weight_decay", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("train.val_fraction", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.center_rate) {
            return bad("train.center_rate", "must lie in [0, 1]");
        }
        if !(self.schedule.plateau_factor > 0.0 && self.schedule.plateau_factor <= 1.0) {
            return bad("train.plateau_factor", "must lie in (0, 1]");
        }
        self.model_config().validate()
    }
}

/// Loss graph of one batch: the per-domain objectives and their terms.
pub struct DomainLosses {
    /// `BCE_gcn (+ Git_gcn)`
    pub gcn: Var,
    pub topo: Option<Var>,
    pub spectro: Option<Var>,
    /// Unit-weight sum of every term.
    pub total: Var,
    pub terms: Vec<(LossTerm, Var)>,
}

/// Builds the ablation-filtered loss terms on top of a forward pass. Git
/// terms read the current centers as constants.
pub fn build_losses(
    g: &mut Graph,
    model: &Model,
    params: &ParameterSet,
    fwd: &ForwardVars,
    labels: &[u8],
    use_git: bool,
) -> Result<DomainLosses> {
    let mut terms = Vec::new();
    let domain = |g: &mut Graph,
                      terms: &mut Vec<(LossTerm, Var)>,
                      logits: Var,
                      e: Var,
                      centers: Option<crate::autodiff::ParamId>,
                      names: (LossTerm, LossTerm)|
     -> Result<Var> {
        let b = bce(g, logits, labels)?;
        terms.push((names.0, b));
        match centers {
            Some(c) if use_git => {
                let gl = git(g, e, labels, params.value(c))?;
                terms.push((names.1, gl));
                Ok(g.add(b, gl))
            }
            _ => Ok(b),
        }
    };
    let c = &model.centers;
    let topo = match (fwd.logits_topo, fwd.e_freq) {
        (Some(z), Some(e)) => Some(domain(g, &mut terms, z, e, c.topo, (LossTerm::BceTopo, LossTerm::GitTopo))?),
        _ => None,
    };
    let spectro = match (fwd.logits_spectro, fwd.e_time_freq) {
        (Some(z), Some(e)) => Some(domain(
            g,
            &mut terms,
            z,
            e,
            c.spectro,
            (LossTerm::BceSpectro, LossTerm::GitSpectro),
        )?),
        _ => None,
    };
    let gcn = domain(g, &mut terms, fwd.logits_gcn, fwd.e_gcn, Some(c.gcn), (LossTerm::BceGcn, LossTerm::GitGcn))?;
    let mut total = terms[0].1;
    for &(_, v) in &terms[1..] {
        total = g.add(total, v);
    }
    Ok(DomainLosses {
        gcn,
        topo,
        spectro,
        total,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn batch(b: usize, cfg: &ModelConfig) -> (Tensor, Tensor) {
        let n = |ch: usize| b * ch * 32 * 32;
        let topo = Tensor::from_parts(
            &[b, cfg.topo_channels, 32, 32],
            (0..n(cfg.topo_channels)).map(|i| ((i * 7) % 13) as f64 / 13.0).collect(),
        );
        let spectro = Tensor::from_parts(
            &[b, cfg.spectro_channels, 32, 32],
            (0..n(cfg.spectro_channels)).map(|i| ((i * 5) % 11) as f64 / 11.0).collect(),
        );
        (topo, spectro)
    }

    fn term_count(use_topo: bool, use_spectro: bool, use_git: bool) -> usize {
        let cfg = TrainConfig {
            use_topo,
            use_spectro,
            use_git,
            model: ModelConfig::tiny(4),
            ..TrainConfig::desk(4)
        };
        let mc = cfg.model_config();
        let (model, params) = Model::new(&mc, 0).unwrap();
        let (t, s) = batch(2, &mc);
        let mut g = Graph::eval();
        let fwd = model.forward(&mut g, &params, &t, &s).unwrap();
        let l = build_losses(&mut g, &model, &params, &fwd, &[0, 1], use_git).unwrap();
        let names: Vec<LossTerm> = l.terms.iter().map(|(t, _)| *t).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(sorted, LossTerm::required(use_topo, use_spectro, use_git));
        let sum: f64 = l.terms.iter().map(|&(_, v)| g.value(v).item()).sum();
        assert!((g.value(l.total).item() - sum).abs() < 1e-12);
        names.len()
    }

    #[test]
    fn ablation_term_counts() {
        assert_eq!(term_count(true, true, true), 6);
        assert_eq!(term_count(true, false, false), 2);
        assert_eq!(term_count(false, true, false), 2);
        assert_eq!(term_count(true, true, false), 3);
        assert_eq!(term_count(false, true, true), 4);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut c = TrainConfig::desk(4);
        c.validate().unwrap();
        c.batch_size = 0;
        match c.validate() {
            Err(GeegaError::Config { key, .. }) => assert_eq!(key, "train.batch_size"),
            other => panic!("{other:?}"),
        }
        let c = TrainConfig {
            use_topo: false,
            use_spectro: false,
            ..TrainConfig::desk(4)
        };
        assert!(c.validate().is_err());
    }
}
