use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::simpson::simpson_integrate;
use super::BandDefinition;
use crate::error::{GeegaError, Result};

/// Points per spectrogram frame.
pub const STFT_WINDOW: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    /// One-sided density in signal units squared per Hz.
    pub power: Vec<f64>,
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with periodic Hann windows. No detrending, so a constant
/// signal keeps its power in the 0 Hz bin.
pub fn psd(signal: &[f64], fs: f64, window_seconds: f64, overlap: f64) -> Result<PsdEstimate> {
    if !(fs > 0.0 && window_seconds > 0.0) || !(0.0..1.0).contains(&overlap) {
        return Err(GeegaError::Parameter(format!(
            "invalid Welch parameters: fs={fs} window={window_seconds}s overlap={overlap}"
        )));
    }
    let nper = (window_seconds * fs).round() as usize;
    if nper < 2 || signal.len() < nper {
        return Err(GeegaError::Parameter(format!(
            "signal of {} samples is shorter than one {}-sample window",
            signal.len(),
            nper
        )));
    }
    let step = ((nper as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let window = hann_periodic(nper);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(nper);
    let nbins = nper / 2 + 1;
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex64::new(0.0, 0.0); nper];
    let mut count = 0usize;
    let mut start = 0;
    while start + nper <= signal.len() {
        for (b, (x, w)) in buf.iter_mut().zip(signal[start..start + nper].iter().zip(&window)) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (fs * wss * count as f64);
    let last_doubled = if nper % 2 == 0 { nbins - 1 } else { nbins };
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| if k > 0 && k < last_doubled { 2.0 * p * scale } else { p * scale })
        .collect();
    let freqs_hz = (0..nbins).map(|k| k as f64 * fs / nper as f64).collect();
    Ok(PsdEstimate { freqs_hz, power })
}

/// Simpson integral of the PSD over the bins inside `[lo, hi]`.
pub fn band_power(psd: &PsdEstimate, band: &BandDefinition) -> Result<f64> {
    let (first, last) = match (psd.freqs_hz.first(), psd.freqs_hz.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(GeegaError::Parameter("empty PSD".into())),
    };
    if band.lo_hz < first || band.hi_hz > last {
        return Err(GeegaError::Parameter(format!(
            "band {} [{}, {}] Hz outside PSD range [{first}, {last}] Hz",
            band.name, band.lo_hz, band.hi_hz
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = psd
        .freqs_hz
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| **f >= band.lo_hz && **f <= band.hi_hz)
        .map(|(f, p)| (*f, *p))
        .unzip();
    if x.len() < 2 {
        return Err(GeegaError::Parameter(format!(
            "band {} covers fewer than 2 PSD bins",
            band.name
        )));
    }
    Ok(simpson_integrate(&y, &x)?.max(0.0))
}

/// Magnitudes of non-overlapping rectangular 256-point FFT frames:
/// `floor(len / 256)` rows of 129 one-sided bins, tail dropped.
pub fn stft_frames(signal: &[f64]) -> Result<Vec<Vec<f64>>> {
    if signal.len() < STFT_WINDOW {
        return Err(GeegaError::Parameter(format!(
            "signal of {} samples is shorter than one {STFT_WINDOW}-point frame",
            signal.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(STFT_WINDOW);
    let mut buf = vec![Complex64::new(0.0, 0.0); STFT_WINDOW];
    let frames = signal
        .chunks_exact(STFT_WINDOW)
        .map(|frame| {
            for (b, &x) in buf.iter_mut().zip(frame) {
                *b = Complex64::new(x, 0.0);
            }
            fft.process(&mut buf);
            buf[..STFT_WINDOW / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn sine_peak_lands_on_its_bin() {
        let p = psd(&sine(10.0, 256.0, 2560), 256.0, 1.0, 0.5).unwrap();
        let peak = p
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(p.freqs_hz[peak], 10.0);
        assert_eq!(p.freqs_hz.len(), 129);
        assert_eq!(*p.freqs_hz.last().unwrap(), 128.0);
    }

    #[test]
    fn dc_signal_power_stays_at_zero_hz() {
        // the Hann main lobe spans bins 0 and 1; nothing leaks past it
        let p = psd(&[1.0; 1024], 256.0, 1.0, 0.5).unwrap();
        assert!(p.power[0] > p.power[1]);
        assert!((p.power[1] / p.power[0] - 0.5).abs() < 1e-12);
        assert!(p.power[2..].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn single_window_parseval() {
        // one window: sum(psd) * df == sum((x w)^2) / sum(w^2)
        let x: Vec<f64> = (0..256).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let p = psd(&x, 256.0, 1.0, 0.5).unwrap();
        let w = hann_periodic(256);
        let lhs: f64 = p.power.iter().sum::<f64>() * 1.0;
        let rhs = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum::<f64>() / w.iter().map(|v| v * v).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(psd(&[0.0; 100], 256.0, 1.0, 0.5).is_err());
        assert!(stft_frames(&[0.0; 255]).is_err());
    }

    #[test]
    fn band_power_on_flat_psd() {
        let psd = PsdEstimate {
            freqs_hz: (0..=20).map(f64::from).collect(),
            power: vec![1.0; 21],
        };
        let alpha = BandDefinition::new("Alpha", 8.0, 12.0).unwrap();
        assert!((band_power(&psd, &alpha).unwrap() - 4.0).abs() < 1e-12);
        let zero = PsdEstimate { power: vec![0.0; 21], ..psd.clone() };
        assert_eq!(band_power(&zero, &alpha).unwrap(), 0.0);
        let gamma = BandDefinition::new("Gamma", 30.0, 75.0).unwrap();
        assert!(band_power(&psd, &gamma).is_err());
        let thin = BandDefinition::new("thin", 8.2, 8.8).unwrap();
        assert!(band_power(&psd, &thin).is_err());
    }

    #[test]
    fn stft_shape_and_zero() {
        let f = stft_frames(&vec![0.0; 2560 + 100]).unwrap();
        assert_eq!(f.len(), 10);
        assert!(f.iter().all(|r| r.len() == 129 && r.iter().all(|&v| v == 0.0)));
    }
}
