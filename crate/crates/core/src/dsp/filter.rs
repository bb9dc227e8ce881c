//! Butterworth bandpass and notch filters as cascaded second-order sections,
//! applied forward and backward for zero phase.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{GeegaError, Result};

/// One biquad: `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    sections: Vec<Section>,
}

impl Sos {
    pub fn new(sections: Vec<Section>) -> Result<Self> {
        let sos = Sos { sections };
        sos.check_stable()?;
        Ok(sos)
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    fn check_stable(&self) -> Result<()> {
        for (i, s) in self.sections.iter().enumerate() {
            // roots of z^2 + a1 z + a2
            let (a1, a2) = (s[3], s[4]);
            let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
            let r1 = (-a1 + disc) / 2.0;
            let r2 = (-a1 - disc) / 2.0;
            if !(r1.norm() < 1.0 && r2.norm() < 1.0) || !s.iter().all(|v| v.is_finite()) {
                return Err(GeegaError::Numeric(format!(
                    "section {i} has a pole on or outside the unit circle"
                )));
            }
        }
        Ok(())
    }

    /// Complex response at `freq_hz` for sampling rate `fs`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            let num = s[0] + s[1] * z1 + s[2] * z2;
            let den = 1.0 + s[3] * z1 + s[4] * z2;
            acc * num / den
        })
    }

    /// Causal filtering from initial section states `zi`.
    fn filter_with_state(&self, x: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z0) in self.sections.iter().zip(zi) {
            let [b0, b1, b2, a1, a2] = *s;
            let (mut z1, mut z2) = (z0[0], z0[1]);
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + z1;
                z1 = b1 * xin - a1 * out + z2;
                z2 = b2 * xin - a2 * out;
                *v = out;
            }
        }
        y
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let zi = vec![[0.0; 2]; self.sections.len()];
        self.filter_with_state(x, &zi)
    }

    /// Section states for the steady-state step response, per unit input.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let [b0, b1, b2, a1, a2] = *s;
                let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
                let z = [(dc - b0) * scale, (b2 - a2 * dc) * scale];
                scale *= dc;
                z
            })
            .collect()
    }

    /// Zero-phase forward-backward filtering with odd-extension padding and
    /// steady-state initial conditions. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(x.len() - 1);
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let unit = self.step_state();
        let scaled = |v: f64| unit.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
        let mut y = self.filter_with_state(&ext, &scaled(ext[0]));
        y.reverse();
        let mut y = self.filter_with_state(&y, &scaled(y[0]));
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

fn check_band(lo: f64, hi: f64, fs: f64) -> Result<()> {
    if !(fs > 0.0 && lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(GeegaError::Parameter(format!(
            "band edges must satisfy 0 < lo < hi < fs/2, got lo={lo} hi={hi} fs={fs}"
        )));
    }
    Ok(())
}

/// Digital Butterworth bandpass of prototype order `order` (2 * order poles)
/// designed by the bilinear transform with pre-warped edges.
pub fn butter_bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Sos> {
    check_band(lo_hz, hi_hz, fs)?;
    if order == 0 {
        return Err(GeegaError::Parameter("filter order must be at least 1".into()));
    }
    let two_fs = 2.0 * fs;
    let w_lo = two_fs * (PI * lo_hz / fs).tan();
    let w_hi = two_fs * (PI * hi_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0 = (w_lo * w_hi).sqrt();

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * bw / 2.0;
        let root = (half * half - w0 * w0).sqrt();
        for pa in [half + root, half - root] {
            poles.push((two_fs + pa) / (two_fs - pa));
        }
    }

    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re));
    real.sort_by(f64::total_cmp);
    if real.len() % 2 != 0 {
        return Err(GeegaError::Numeric("unpaired real pole in bandpass design".into()));
    }

    let mut sections: Vec<Section> = Vec::with_capacity(order);
    for p in complex {
        sections.push([1.0, 0.0, -1.0, -2.0 * p.re, p.norm_sqr()]);
    }
    for pair in real.chunks(2) {
        sections.push([1.0, 0.0, -1.0, -(pair[0] + pair[1]), pair[0] * pair[1]]);
    }

    // unit gain at the geometric centre frequency, one section at a time
    let center_hz = fs / PI * (w0 / two_fs).atan();
    for s in sections.iter_mut() {
        let single = Sos { sections: vec![*s] };
        let g = 1.0 / single.response(center_hz, fs).norm();
        s[0] *= g;
        s[1] *= g;
        s[2] *= g;
    }
    Sos::new(sections)
}

/// Second-order IIR notch at `f0_hz` with quality factor `quality`.
pub fn iir_notch(f0_hz: f64, quality: f64, fs: f64) -> Result<Sos> {
    if !(fs > 0.0 && f0_hz > 0.0 && f0_hz < fs / 2.0) {
        return Err(GeegaError::Parameter(format!(
            "notch frequency must satisfy 0 < f0 < fs/2, got f0={f0_hz} fs={fs}"
        )));
    }
    if quality <= 0.0 {
        return Err(GeegaError::Parameter("notch quality must be positive".into()));
    }
    let w0 = 2.0 * PI * f0_hz / fs;
    let beta = (w0 / quality / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    Sos::new(vec![[
        gain,
        -2.0 * gain * w0.cos(),
        gain,
        -2.0 * gain * w0.cos(),
        2.0 * gain - 1.0,
    ]])
}

/// Zero-phase Butterworth bandpass.
pub fn bandpass(signal: &[f64], fs: f64, lo_hz: f64, hi_hz: f64, order: usize) -> Result<Vec<f64>> {
    Ok(butter_bandpass(order, lo_hz, hi_hz, fs)?.filtfilt(signal))
}

/// Zero-phase notch.
pub fn notch(signal: &[f64], fs: f64, f0_hz: f64, quality: f64) -> Result<Vec<f64>> {
    Ok(iir_notch(f0_hz, quality, fs)?.filtfilt(signal))
}
