use serde::{Deserialize, Serialize};

use crate::error::{GeegaError, Result};

/// Accuracy and macro F1, both in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
}

/// Class 1 iff `sigmoid(z) >= 0.5`, i.e. `z >= 0`.
pub fn threshold(logits: &[f64]) -> Vec<u8> {
    logits.iter().map(|&z| (z >= 0.0) as u8).collect()
}

/// Macro F1 averages over the classes that occur in either the labels or
/// the predictions.
pub fn metrics(predictions: &[u8], labels: &[u8]) -> Result<Scores> {
    if predictions.is_empty() {
        return Err(GeegaError::Metric("no predictions to score".into()));
    }
    if predictions.len() != labels.len() {
        return Err(GeegaError::Metric(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(bad) = predictions.iter().chain(labels).find(|&&v| v > 1) {
        return Err(GeegaError::Metric(format!("non-binary value {bad}")));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let mut f1_sum = 0.0;
    let mut classes = 0;
    for c in 0..=1u8 {
        let tp = predictions.iter().zip(labels).filter(|&(&p, &l)| p == c && l == c).count();
        let fp = predictions.iter().zip(labels).filter(|&(&p, &l)| p == c && l != c).count();
        let fn_ = predictions.iter().zip(labels).filter(|&(&p, &l)| p != c && l == c).count();
        if tp + fp + fn_ == 0 {
            continue;
        }
        f1_sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        classes += 1;
    }
    Ok(Scores {
        accuracy: 100.0 * correct as f64 / labels.len() as f64,
        f1: 100.0 * f1_sum / classes as f64,
    })
}

/// Mean and population standard deviation across folds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<MeanStd> {
        if values.is_empty() {
            return Err(GeegaError::Metric("nothing to aggregate".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

impl std::fmt::Display for MeanStd {
    /// `73.54(8.66)`
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}({:.2})", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let s = metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((s.accuracy, s.f1), (100.0, 100.0));
        let s = metrics(&[1, 0], &[0, 1]).unwrap();
        assert_eq!((s.accuracy, s.f1), (0.0, 0.0));
        let s = metrics(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.accuracy, 75.0);
        // confusion: class 0 tp1 fn1, class 1 tp2 fp1
        let oracle = (2.0 / 3.0 + 4.0 / 5.0) / 2.0 * 100.0;
        assert!((s.f1 - oracle).abs() < 1e-12);
        assert!((s.f1 - 73.33).abs() < 5e-3);
        let s = metrics(&[1, 1], &[1, 1]).unwrap();
        assert_eq!((s.accuracy, s.f1), (100.0, 100.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics(&[], &[]), Err(GeegaError::Metric(_))));
        assert!(metrics(&[0], &[0, 1]).is_err());
        assert!(metrics(&[2], &[0]).is_err());
    }

    #[test]
    fn thresholding_and_aggregation() {
        assert_eq!(threshold(&[-0.1, 0.0, 3.0]), vec![0, 1, 1]);
        let m = MeanStd::of(&[70.0, 80.0]).unwrap();
        assert_eq!((m.mean, m.std), (75.0, 5.0));
        assert_eq!(m.to_string(), "75.00(5.00)");
    }
}
