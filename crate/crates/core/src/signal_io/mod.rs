//! Recording ingestion, synthetic data, montages and segmentation.

mod montage;
mod recording;
mod segment;
mod synth;

pub use montage::{
    montage_from_labels, project, sphere_position, Electrode, Montage, BCI2A22_LABELS, HEADBAND4_LABELS,
    HEAD_RADIUS_DEG,
};
pub use recording::{
    binarize_label, decode_binary, encode_binary, ingest, write_binary, write_csv, EegRecording, LabelKind,
    LabelTrack, RecordingFormat, RECORDING_MAGIC, RECORDING_VERSION,
};
pub use segment::{segment, window_samples, Segment};
pub use synth::{synthesize, synthetic_subject_id, Oscillator, SyntheticSpec};

use crate::dsp::FilterConfig;
use crate::error::Result;

/// Applies the filter chain to every channel. Samples stay `f32`.
pub fn filter_recording(rec: &EegRecording, cfg: &FilterConfig) -> Result<EegRecording> {
    let mut data = Vec::with_capacity(rec.data.len());
    for ch in 0..rec.n_channels() {
        let y = cfg.apply(&rec.channel_f64(ch), rec.sample_rate_hz)?;
        data.extend(y.into_iter().map(|v| v as f32));
    }
    EegRecording::new(
        &rec.subject_id,
        rec.channels.clone(),
        rec.sample_rate_hz,
        data,
        rec.labels.clone(),
    )
}
