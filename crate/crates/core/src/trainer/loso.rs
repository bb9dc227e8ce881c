use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::fold::{train_fold, EpochRecord};
use super::metrics::{MeanStd, Scores};
use super::TrainConfig;
use crate::error::{GeegaError, Result};
use crate::features::FeatureSet;
use crate::losses::ConflictRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub test_subject: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub scores: Scores,
}

/// Mean(std) across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub folds: usize,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
}

pub struct RunMetrics {
    pub folds: Vec<FoldMetrics>,
    pub summary: RunSummary,
    /// Every epoch of every fold, fold-major.
    pub epochs: Vec<EpochRecord>,
    /// Conflict log of each fold.
    pub conflicts: Vec<Vec<ConflictRecord>>,
    pub checkpoints: Vec<Checkpoint>,
}

impl RunMetrics {
    pub fn all_conflicts(&self) -> Vec<ConflictRecord> {
        self.conflicts.iter().flatten().cloned().collect()
    }
}

/// Stratified split of `set` into (train, validation) indices: a
/// `fraction` share of each class, rounded, goes to validation. A class
/// always keeps at least one training sample.
pub fn split_validation(set: &FeatureSet, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// One fold per subject: that subject's segments are the test set, the
/// others are split into training and validation.
pub fn loso(features: &FeatureSet, cfg: &TrainConfig) -> Result<RunMetrics> {
    let subjects = features.subject_ids();
    if subjects.len() < 2 {
        return Err(GeegaError::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let mut folds = Vec::with_capacity(subjects.len());
    let mut epochs = Vec::new();
    let mut conflicts = Vec::new();
    let mut checkpoints = Vec::new();
    for (fold, subject) in subjects.iter().enumerate() {
        let test_idx = features.indices_of_subject(subject);
        let rest: Vec<usize> = (0..features.len()).filter(|i| features.subjects[*i] != *subject).collect();
        let pool = features.select(&rest);
        let (tr, va) = split_validation(&pool, cfg.val_fraction, cfg.seed ^ fold as u64);
        let (train, val, test) = (pool.select(&tr), pool.select(&va), features.select(&test_idx));
        log::info!(
            "fold {fold}: test subject {subject}, {} train / {} val / {} test segments",
            train.len(),
            val.len(),
            test.len()
        );
        let out = train_fold(&train, &val, Some(&test), cfg, fold)?;
        folds.push(FoldMetrics {
            fold,
            test_subject: subject.clone(),
            n_train: train.len(),
            n_val: val.len(),
            n_test: test.len(),
            scores: out.test.expect("test set was given"),
        });
        epochs.extend(out.epochs);
        conflicts.push(out.conflicts);
        checkpoints.push(out.checkpoint);
    }
    let acc: Vec<f64> = folds.iter().map(|f| f.scores.accuracy).collect();
    let f1: Vec<f64> = folds.iter().map(|f| f.scores.f1).collect();
    Ok(RunMetrics {
        summary: RunSummary {
            folds: folds.len(),
            accuracy: MeanStd::of(&acc)?,
            f1: MeanStd::of(&f1)?,
        },
        folds,
        epochs,
        conflicts,
        checkpoints,
    })
}
