//! Flat `key=value` run configuration with dotted keys.
//!
//! Blank lines and `#` comments are ignored. `preset` (large, desk or tiny)
//! is applied before every other key, wherever it appears.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::dsp::FilterConfig;
use crate::error::{GeegaError, Result};
use crate::features::FeatureConfig;
use crate::model::{ModelConfig, Readout};
use crate::signal_io::SyntheticSpec;
use crate::trainer::{FinalMetrics, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Large,
    Desk,
    Tiny,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Large => "large",
            Preset::Desk => "desk",
            Preset::Tiny => "tiny",
        }
    }

    /// Training defaults for `channels` spectrogram maps.
    pub fn train(self, channels: usize) -> TrainConfig {
        match self {
            Preset::Large => TrainConfig::large(channels),
            Preset::Desk => TrainConfig::desk(channels),
            Preset::Tiny => TrainConfig {
                model: ModelConfig::tiny(channels),
                ..TrainConfig::desk(channels)
            },
        }
    }
}

impl FromStr for Preset {
    type Err = GeegaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(Preset::Large),
            "desk" => Ok(Preset::Desk),
            "tiny" => Ok(Preset::Tiny),
            _ => Err(GeegaError::config("preset", format!("unknown preset `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub synth: SyntheticSpec,
    pub features: FeatureConfig,
    /// Filter settings kept even while filtering is disabled.
    pub filter: FilterConfig,
    pub filter_enabled: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_preset(Preset::Desk)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| GeegaError::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(GeegaError::config(key, format!("expected true or false, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        let synth = SyntheticSpec::default();
        let channels = synth.channels.len();
        let features = FeatureConfig::default();
        RunConfig {
            preset,
            filter: features.filter.clone().unwrap_or_default(),
            filter_enabled: features.filter.is_some(),
            features,
            synth,
            train: preset.train(channels),
        }
    }

    /// Parses a configuration file. Unknown, duplicate or malformed keys are
    /// errors naming the key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GeegaError::config(line, format!("line {} is not `key=value`", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some(first) = seen.insert(k.clone(), i + 1) {
                return Err(GeegaError::config(&k, format!("set twice (lines {first} and {})", i + 1)));
            }
            entries.push((k, v));
        }
        let preset = match entries.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse()?,
            None => Preset::Desk,
        };
        let mut cfg = RunConfig::with_preset(preset);
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        let t = &mut self.train;
        let m = &mut t.model;
        let f = &mut self.filter;
        let v = value;
        match key {
            "preset" => *self = RunConfig::with_preset(v.parse()?),
            "synth.subjects" => s.n_subjects = parse(key, v)?,
            "synth.duration_seconds" => s.duration_seconds = parse(key, v)?,
            "synth.sample_rate_hz" => s.sample_rate_hz = parse(key, v)?,
            "synth.noise_uv" => s.noise_uv = parse(key, v)?,
            "synth.subject_jitter" => s.subject_jitter = parse(key, v)?,
            "synth.modulation_depth" => s.modulation_depth = parse(key, v)?,
            "features.window_seconds" => self.features.window_seconds = parse(key, v)?,
            "features.psd_window_seconds" => self.features.topo.psd_window_seconds = parse(key, v)?,
            "features.psd_overlap" => self.features.topo.psd_overlap = parse(key, v)?,
            "features.log_power" => self.features.topo.log_power = parse_bool(key, v)?,
            "filter.enabled" => self.filter_enabled = parse_bool(key, v)?,
            "filter.lo_hz" => f.band_lo_hz = parse(key, v)?,
            "filter.hi_hz" => f.band_hi_hz = parse(key, v)?,
            "filter.order" => f.order = parse(key, v)?,
            "filter.notch_hz" => f.notch_hz = if v == "none" { None } else { Some(parse(key, v)?) },
            "filter.notch_quality" => f.notch_quality = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.weight_decay" => t.weight_decay = parse(key, v)?,
            "train.warmup_epochs" => t.schedule.warmup_epochs = parse(key, v)?,
            "train.plateau_factor" => t.schedule.plateau_factor = parse(key, v)?,
            "train.plateau_patience" => t.schedule.plateau_patience = parse(key, v)?,
            "train.seed" => t.seed = parse(key, v)?,
            "train.use_topo" => t.use_topo = parse_bool(key, v)?,
            "train.use_spectro" => t.use_spectro = parse_bool(key, v)?,
            "train.use_git" => t.use_git = parse_bool(key, v)?,
            "train.use_align" => t.use_align = parse_bool(key, v)?,
            "train.center_rate" => t.center_rate = parse(key, v)?,
            "train.val_fraction" => t.val_fraction = parse(key, v)?,
            "train.normalize" => t.normalize = parse_bool(key, v)?,
            "train.final_metrics" => {
                t.final_metrics = match v {
                    "last_epoch" => FinalMetrics::LastEpoch,
                    "best_validation" => FinalMetrics::BestValidation,
                    _ => return Err(GeegaError::config(key, format!("expected last_epoch or best_validation, got `{v}`"))),
                }
            }
            "encoder.blocks" => m.encoder.blocks = parse(key, v)?,
            "encoder.heads" => m.encoder.heads = parse(key, v)?,
            "encoder.embed_dim" => m.encoder.embed_dim = parse(key, v)?,
            "encoder.mlp_hidden" => m.encoder.mlp_hidden = parse(key, v)?,
            "encoder.dropout" => m.encoder.dropout = parse(key, v)?,
            "encoder.patch_size" => m.encoder.patch_size = parse(key, v)?,
            "encoder.readout" => {
                m.encoder.readout = match v {
                    "class_token" => Readout::ClassToken,
                    "mean_pool" => Readout::MeanPool,
                    _ => return Err(GeegaError::config(key, format!("expected class_token or mean_pool, got `{v}`"))),
                }
            }
            "gcn.g2" => m.gcn.g2 = parse(key, v)?,
            "gcn.nodes" => m.gcn.nodes = parse(key, v)?,
            "gcn.node_features" => m.gcn.node_features = parse(key, v)?,
            "gcn.hidden" => m.gcn.hidden = parse(key, v)?,
            "head.hidden" => m.head.hidden = parse(key, v)?,
            "head.dropout" => m.head.dropout = parse(key, v)?,
            _ => return Err(GeegaError::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its current value, `preset` first.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let t = &self.train;
        let m = &t.model;
        let f = &self.filter;
        let readout = match m.encoder.readout {
            Readout::ClassToken => "class_token",
            Readout::MeanPool => "mean_pool",
        };
        let final_metrics = match t.final_metrics {
            FinalMetrics::LastEpoch => "last_epoch",
            FinalMetrics::BestValidation => "best_validation",
        };
        vec![
            ("preset", self.preset.as_str().to_string()),
            ("synth.subjects", s.n_subjects.to_string()),
            ("synth.duration_seconds", s.duration_seconds.to_string()),
            ("synth.sample_rate_hz", s.sample_rate_hz.to_string()),
            ("synth.noise_uv", s.noise_uv.to_string()),
            ("synth.subject_jitter", s.subject_jitter.to_string()),
            ("synth.modulation_depth", s.modulation_depth.to_string()),
            ("features.window_seconds", self.features.window_seconds.to_string()),
            ("features.psd_window_seconds", self.features.topo.psd_window_seconds.to_string()),
            ("features.psd_overlap", self.features.topo.psd_overlap.to_string()),
            ("features.log_power", self.features.topo.log_power.to_string()),
            ("filter.enabled", self.filter_enabled.to_string()),
            ("filter.lo_hz", f.band_lo_hz.to_string()),
            ("filter.hi_hz", f.band_hi_hz.to_string()),
            ("filter.order", f.order.to_string()),
            ("filter.notch_hz", f.notch_hz.map_or("none".into(), |h| h.to_string())),
            ("filter.notch_quality", f.notch_quality.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.warmup_epochs", t.schedule.warmup_epochs.to_string()),
            ("train.plateau_factor", t.schedule.plateau_factor.to_string()),
            ("train.plateau_patience", t.schedule.plateau_patience.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.use_topo", t.use_topo.to_string()),
            ("train.use_spectro", t.use_spectro.to_string()),
            ("train.use_git", t.use_git.to_string()),
            ("train.use_align", t.use_align.to_string()),
            ("train.center_rate", t.center_rate.to_string()),
            ("train.val_fraction", t.val_fraction.to_string()),
            ("train.normalize", t.normalize.to_string()),
            ("train.final_metrics", final_metrics.to_string()),
            ("encoder.blocks", m.encoder.blocks.to_string()),
            ("encoder.heads", m.encoder.heads.to_string()),
            ("encoder.embed_dim", m.encoder.embed_dim.to_string()),
            ("encoder.mlp_hidden", m.encoder.mlp_hidden.to_string()),
            ("encoder.dropout", m.encoder.dropout.to_string()),
            ("encoder.patch_size", m.encoder.patch_size.to_string()),
            ("encoder.readout", readout.to_string()),
            ("gcn.g2", m.gcn.g2.to_string()),
            ("gcn.nodes", m.gcn.nodes.to_string()),
            ("gcn.node_features", m.gcn.node_features.to_string()),
            ("gcn.hidden", m.gcn.hidden.to_string()),
            ("head.hidden", m.head.hidden.to_string()),
            ("head.dropout", m.head.dropout.to_string()),
        ]
    }

    /// The configuration as a file [`RunConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Feature settings with the filter switch applied.
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            filter: self.filter_enabled.then(|| self.filter.clone()),
            ..self.features.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth
            .validate()
            .map_err(|e| GeegaError::config("synth", e.to_string()))?;
        if !(self.features.window_seconds > 0.0) {
            return Err(GeegaError::config("features.window_seconds", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.features.topo.psd_overlap) {
            return Err(GeegaError::config("features.psd_overlap", "must lie in [0, 1)"));
        }
        if self.filter.order == 0 {
            return Err(GeegaError::config("filter.order", "must be at least 1"));
        }
        if !(self.filter.band_lo_hz > 0.0 && self.filter.band_lo_hz < self.filter.band_hi_hz) {
            return Err(GeegaError::config("filter.lo_hz", "need 0 < lo_hz < hi_hz"));
        }
        self.train.validate()
    }
}
