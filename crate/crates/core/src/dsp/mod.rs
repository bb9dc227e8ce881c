//! Filtering, spectral estimation and band-power integration.

mod filter;
mod simpson;
mod spectral;

use serde::{Deserialize, Serialize};

pub use filter::{bandpass, butter_bandpass, iir_notch, notch, Section, Sos};
pub use simpson::simpson_integrate;
pub use spectral::{band_power, psd, stft_frames, PsdEstimate, STFT_WINDOW};

use crate::error::{GeegaError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandDefinition {
    pub fn new(name: &str, lo_hz: f64, hi_hz: f64) -> Result<Self> {
        if !(lo_hz > 0.0 && lo_hz < hi_hz) {
            return Err(GeegaError::Parameter(format!(
                "band {name}: need 0 < lo < hi, got [{lo_hz}, {hi_hz}]"
            )));
        }
        Ok(BandDefinition {
            name: name.to_string(),
            lo_hz,
            hi_hz,
        })
    }

    /// Delta 1-4, Theta 4-8, Alpha 8-12, Beta 12-30, Gamma 30-75 Hz.
    pub fn standard() -> Vec<BandDefinition> {
        [
            ("Delta", 1.0, 4.0),
            ("Theta", 4.0, 8.0),
            ("Alpha", 8.0, 12.0),
            ("Beta", 12.0, 30.0),
            ("Gamma", 30.0, 75.0),
        ]
        .into_iter()
        .map(|(n, lo, hi)| BandDefinition::new(n, lo, hi).unwrap())
        .collect()
    }
}

/// Bands must be ordered and non-overlapping.
pub fn validate_bands(bands: &[BandDefinition]) -> Result<()> {
    if bands.is_empty() {
        return Err(GeegaError::Parameter("no frequency bands".into()));
    }
    for w in bands.windows(2) {
        if w[1].lo_hz < w[0].hi_hz {
            return Err(GeegaError::Parameter(format!(
                "bands {} and {} overlap or are out of order",
                w[0].name, w[1].name
            )));
        }
    }
    Ok(())
}

/// Filtering defaults: 1-75 Hz order-4 bandpass and a 60 Hz, Q=30 notch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub order: usize,
    pub notch_hz: Option<f64>,
    pub notch_quality: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            band_lo_hz: 1.0,
            band_hi_hz: 75.0,
            order: 4,
            notch_hz: Some(60.0),
            notch_quality: 30.0,
        }
    }
}

impl FilterConfig {
    /// Bandpass then (optionally) notch one channel.
    pub fn apply(&self, signal: &[f64], fs: f64) -> Result<Vec<f64>> {
        let mut y = bandpass(signal, fs, self.band_lo_hz, self.band_hi_hz, self.order)?;
        if let Some(f0) = self.notch_hz {
            y = notch(&y, fs, f0, self.notch_quality)?;
        }
        Ok(y)
    }
}
