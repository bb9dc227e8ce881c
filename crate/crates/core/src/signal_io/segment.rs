use serde::{Deserialize, Serialize};

use super::recording::EegRecording;
use crate::error::{GeegaError, Result};

/// Fixed-length labeled window, one vector per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub data: Vec<Vec<f64>>,
    pub label: u8,
    pub subject_id: String,
    pub sample_rate_hz: f64,
}

impl Segment {
    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples per window: `round(window_seconds * sample_rate)`.
pub fn window_samples(window_seconds: f64, sample_rate_hz: f64) -> Result<usize> {
    let l = (window_seconds * sample_rate_hz).round();
    if !(l >= 1.0) {
        return Err(GeegaError::Parameter(format!(
            "window of {window_seconds} s at {sample_rate_hz} Hz holds no samples"
        )));
    }
    Ok(l as usize)
}

/// Cuts `floor(T / L)` non-overlapping windows; the incomplete tail is
/// dropped. A window's label is the most frequent raw label inside it
/// (ties go to the smaller value), binarized per the track's kind.
pub fn segment(rec: &EegRecording, window_seconds: f64) -> Result<Vec<Segment>> {
    let l = window_samples(window_seconds, rec.sample_rate_hz)?;
    let count = rec.n_samples / l;
    (0..count)
        .map(|w| {
            let range = w * l..(w + 1) * l;
            let data = (0..rec.n_channels())
                .map(|ch| rec.channel(ch)[range.clone()].iter().map(|&v| v as f64).collect())
                .collect();
            let mut hist = [0usize; 256];
            for &v in &rec.labels.values[range] {
                hist[v as usize] += 1;
            }
            let raw = (0..256).max_by_key(|&v| (hist[v], std::cmp::Reverse(v))).unwrap() as u8;
            Ok(Segment {
                data,
                label: rec.labels.binary(raw)?,
                subject_id: rec.subject_id.clone(),
                sample_rate_hz: rec.sample_rate_hz,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::recording::{LabelKind, LabelTrack};

    fn rec(t: usize, fs: f64, score: u8) -> EegRecording {
        EegRecording::new(
            "S1",
            vec!["A".into(), "B".into()],
            fs,
            (0..2 * t).map(|i| i as f32).collect(),
            LabelTrack::constant(LabelKind::Score, score, t),
        )
        .unwrap()
    }

    #[test]
    fn exact_fit_tail_and_degenerate() {
        assert_eq!(segment(&rec(2560, 256.0, 3), 10.0).unwrap().len(), 1);
        let s = segment(&rec(5200, 256.0, 3), 10.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].len(), 2560);
        assert_eq!(s[1].data[1][0], (5200 + 2560) as f64);
        assert!(segment(&rec(100, 256.0, 3), 10.0).unwrap().is_empty());
    }

    #[test]
    fn label_is_binarized_majority() {
        let mut r = rec(10, 1.0, 7);
        r.labels.values[..4].fill(2);
        let s = segment(&r, 10.0).unwrap();
        assert_eq!(s[0].label, 1);
        r.labels.values[..6].fill(2);
        assert_eq!(segment(&r, 10.0).unwrap()[0].label, 0);
        r.labels.values[0] = 0;
        r.labels.values[1..].fill(0);
        assert!(segment(&r, 10.0).is_err());
    }

    #[test]
    fn zero_length_window_is_rejected() {
        assert!(segment(&rec(10, 1.0, 3), 0.1).is_err());
    }
}
