use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::montage::HEADBAND4_LABELS;
use super::recording::{EegRecording, LabelKind, LabelTrack};
use crate::dsp::{bandpass, BandDefinition};
use crate::error::{GeegaError, Result};

/// One band-limited source. Its amplitude depends on the class; channels
/// not listed do not receive it (an empty list means every channel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub band: BandDefinition,
    /// Peak amplitude in microvolts for class 0 and class 1.
    pub amplitude_uv: [f64; 2],
    pub channels: Vec<String>,
    /// Fixed-frequency sinusoid. Without it the source is white noise
    /// band-passed to the band and scaled to the power of a sinusoid of the
    /// same amplitude, so no recording carries a fixed spectral line.
    pub freq_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    /// Length of each (subject, class) recording.
    pub duration_seconds: f64,
    pub oscillators: Vec<Oscillator>,
    /// White-noise standard deviation in microvolts.
    pub noise_uv: f64,
    /// Each subject scales every oscillator by a factor in `1 ± jitter`.
    pub subject_jitter: f64,
    /// Depth of the slow amplitude modulation (0 disables it).
    pub modulation_depth: f64,
}

impl Default for SyntheticSpec {
    /// Four subjects on the headband montage, 120 s per class at 256 Hz.
    /// Class 1 doubles Alpha on AF7/AF8.
    fn default() -> Self {
        let bands = BandDefinition::standard();
        let all = |name: &str, a: f64| Oscillator {
            band: bands.iter().find(|b| b.name == name).unwrap().clone(),
            amplitude_uv: [a, a],
            channels: Vec::new(),
            freq_hz: None,
        };
        let alpha = bands[2].clone();
        SyntheticSpec {
            n_subjects: 4,
            channels: HEADBAND4_LABELS.iter().map(|s| s.to_string()).collect(),
            sample_rate_hz: 256.0,
            duration_seconds: 120.0,
            oscillators: vec![
                all("Delta", 8.0),
                all("Theta", 6.0),
                Oscillator {
                    band: alpha.clone(),
                    amplitude_uv: [5.0, 5.0],
                    channels: vec!["TP9".into(), "TP10".into()],
                    freq_hz: None,
                },
                Oscillator {
                    band: alpha,
                    amplitude_uv: [5.0, 10.0],
                    channels: vec!["AF7".into(), "AF8".into()],
                    freq_hz: None,
                },
                all("Beta", 3.0),
                all("Gamma", 1.5),
            ],
            noise_uv: 2.0,
            subject_jitter: 0.2,
            modulation_depth: 0.3,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeegaError::Spec(m));
        if self.channels.is_empty() {
            return bad("synthetic spec has zero channels".into());
        }
        if self.n_subjects == 0 {
            return bad("synthetic spec has zero subjects".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {} is not positive", self.sample_rate_hz));
        }
        if !((self.duration_seconds * self.sample_rate_hz).round() >= 1.0) {
            return bad("synthetic spec has zero duration".into());
        }
        if self.noise_uv < 0.0 || !(0.0..1.0).contains(&self.subject_jitter) || !(0.0..=1.0).contains(&self.modulation_depth) {
            return bad("noise, jitter or modulation out of range".into());
        }
        for o in &self.oscillators {
            if let Some(ch) = o.channels.iter().find(|c| !self.channels.contains(c)) {
                return bad(format!("oscillator in band {} names unknown channel {ch}", o.band.name));
            }
            if let Some(f) = o.freq_hz {
                if !(f > 0.0 && f < self.sample_rate_hz / 2.0) {
                    return bad(format!("oscillator frequency {f} Hz outside (0, Nyquist)"));
                }
            }
        }
        Ok(())
    }
}

/// Unit-normal noise band-passed to `band` and rescaled to RMS `1/sqrt(2)`.
fn band_noise(rng: &mut ChaCha8Rng, band: &BandDefinition, fs: f64, n: usize) -> Result<Vec<f64>> {
    let white: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let hi = band.hi_hz.min(0.45 * fs);
    if band.lo_hz >= hi {
        return Err(GeegaError::Spec(format!("band {} lies above Nyquist at {fs} Hz", band.name)));
    }
    let mut y = bandpass(&white, fs, band.lo_hz, hi, 4)?;
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let k = std::f64::consts::FRAC_1_SQRT_2 / rms;
        y.iter_mut().for_each(|v| *v *= k);
    }
    Ok(y)
}

/// Subject identifier used by the generator.
pub fn synthetic_subject_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// One recording per subject and class, ordered subject-major. Class-0
/// recordings carry scores in 1..=5 and class-1 recordings 6..=9. Each
/// recording draws from its own ChaCha8 stream, so output depends only on
/// `(spec, seed)`.
pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Result<Vec<EegRecording>> {
    spec.validate()?;
    let t_len = (spec.duration_seconds * spec.sample_rate_hz).round() as usize;
    let fs = spec.sample_rate_hz;
    let noise = Normal::new(0.0, spec.noise_uv.max(f64::MIN_POSITIVE)).unwrap();
    let mut out = Vec::with_capacity(spec.n_subjects * 2);
    for subject in 0..spec.n_subjects {
        let mut subject_rng = ChaCha8Rng::seed_from_u64(seed);
        subject_rng.set_stream(1 + subject as u64);
        let gains: Vec<f64> = spec
            .oscillators
            .iter()
            .map(|_| 1.0 + spec.subject_jitter * (2.0 * subject_rng.gen::<f64>() - 1.0))
            .collect();
        for class in 0..2usize {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + (spec.n_subjects + 2 * subject + class) as u64);
            let mut data = vec![0.0f32; spec.channels.len() * t_len];
            for (ch, name) in spec.channels.iter().enumerate() {
                let mut x = vec![0.0f64; t_len];
                for (o, gain) in spec.oscillators.iter().zip(&gains) {
                    // draw every parameter even when unused so streams stay aligned
                    let phase = 2.0 * PI * rng.gen::<f64>();
                    let f_mod = 0.05 + 0.15 * rng.gen::<f64>();
                    let phase_mod = 2.0 * PI * rng.gen::<f64>();
                    let carrier = match o.freq_hz {
                        Some(f) => {
                            let f = f.min(fs / 2.0 * 0.99);
                            (0..t_len).map(|i| (2.0 * PI * f * i as f64 / fs + phase).sin()).collect()
                        }
                        None => band_noise(&mut rng, &o.band, fs, t_len)?,
                    };
                    if !(o.channels.is_empty() || o.channels.contains(name)) {
                        continue;
                    }
                    let amp = o.amplitude_uv[class] * gain;
                    for (i, (v, c)) in x.iter_mut().zip(&carrier).enumerate() {
                        let t = i as f64 / fs;
                        let env = 1.0 + spec.modulation_depth * (2.0 * PI * f_mod * t + phase_mod).sin();
                        *v += amp * env * c;
                    }
                }
                if spec.noise_uv > 0.0 {
                    for v in x.iter_mut() {
                        *v += noise.sample(&mut rng);
                    }
                }
                for (d, v) in data[ch * t_len..(ch + 1) * t_len].iter_mut().zip(&x) {
                    *d = *v as f32;
                }
            }
            let score = if class == 0 { rng.gen_range(1..=5) } else { rng.gen_range(6..=9) };
            out.push(EegRecording::new(
                &synthetic_subject_id(subject),
                spec.channels.clone(),
                fs,
                data,
                LabelTrack::constant(LabelKind::Score, score, t_len),
            )?);
        }
    }
    Ok(out)
}
