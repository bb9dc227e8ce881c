//! Topography maps and spectrograms, the two model input domains.

mod maps;
mod rbf;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use maps::{
    band_powers, grid_coordinates, resize_bilinear, spectrogram, topomap, topomap_for_montage, TopoGrid, TopoOptions,
    MAP_SIZE,
};
pub use rbf::{mean_nearest_neighbor, rbf_fit, RbfInterpolant};

use crate::autodiff::Tensor;
use crate::container::{Container, TensorData};
use crate::dsp::{validate_bands, BandDefinition, FilterConfig};
use crate::error::{GeegaError, Result};
use crate::signal_io::{filter_recording, segment, EegRecording, Electrode, Montage};

pub const FEATURE_MAGIC: &[u8; 4] = b"GEEF";

const PIXELS: usize = MAP_SIZE * MAP_SIZE;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub window_seconds: f64,
    pub bands: Vec<BandDefinition>,
    /// `None` skips filtering entirely.
    pub filter: Option<FilterConfig>,
    pub topo: TopoOptions,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_seconds: 10.0,
            bands: BandDefinition::standard(),
            filter: Some(FilterConfig::default()),
            topo: TopoOptions::default(),
        }
    }
}

/// Features of a set of segments. Maps are stored flattened:
/// `topo[i]` is `[k x 32 x 32]`, `spectro[i]` is `[c x 32 x 32]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub band_names: Vec<String>,
    pub channel_names: Vec<String>,
    pub topo: Vec<Vec<f64>>,
    pub spectro: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub subjects: Vec<String>,
}

impl FeatureSet {
    pub fn empty(band_names: Vec<String>, channel_names: Vec<String>) -> Self {
        FeatureSet {
            band_names,
            channel_names,
            topo: Vec::new(),
            spectro: Vec::new(),
            labels: Vec::new(),
            subjects: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_bands(&self) -> usize {
        self.band_names.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    /// Sorted distinct subject ids.
    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn indices_of_subject(&self, subject: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.subjects[i] == subject).collect()
    }

    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            band_names: self.band_names.clone(),
            channel_names: self.channel_names.clone(),
            topo: indices.iter().map(|&i| self.topo[i].clone()).collect(),
            spectro: indices.iter().map(|&i| self.spectro[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    pub fn extend(&mut self, other: FeatureSet) -> Result<()> {
        if other.band_names != self.band_names || other.channel_names.len() != self.channel_names.len() {
            return Err(GeegaError::Contract("feature sets have different layouts".into()));
        }
        self.topo.extend(other.topo);
        self.spectro.extend(other.spectro);
        self.labels.extend(other.labels);
        self.subjects.extend(other.subjects);
        Ok(())
    }

    /// `[B x k x 32 x 32]` batch of the given rows.
    pub fn topo_batch(&self, indices: &[usize]) -> Tensor {
        let data = indices.iter().flat_map(|&i| self.topo[i].iter().copied()).collect();
        Tensor::from_parts(&[indices.len(), self.n_bands(), MAP_SIZE, MAP_SIZE], data)
    }

    /// `[B x c x 32 x 32]` batch of the given rows.
    pub fn spectro_batch(&self, indices: &[usize]) -> Tensor {
        let data = indices.iter().flat_map(|&i| self.spectro[i].iter().copied()).collect();
        Tensor::from_parts(&[indices.len(), self.n_channels(), MAP_SIZE, MAP_SIZE], data)
    }

    pub fn is_finite(&self) -> bool {
        self.topo.iter().chain(&self.spectro).all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(FEATURE_MAGIC);
        c.set_meta("bands", self.band_names.join(","));
        c.set_meta("channels", self.channel_names.join(","));
        let ids = self.subject_ids();
        if ids.iter().any(|s| s.contains(',')) {
            return Err(GeegaError::Format("subject ids may not contain commas".into()));
        }
        c.set_meta("subjects", ids.join(","));
        let n = self.len();
        let f32s = |maps: &[Vec<f64>]| TensorData::F32(maps.iter().flatten().map(|&v| v as f32).collect());
        c.push("topo", vec![n, self.n_bands(), MAP_SIZE, MAP_SIZE], f32s(&self.topo))?;
        c.push("spectro", vec![n, self.n_channels(), MAP_SIZE, MAP_SIZE], f32s(&self.spectro))?;
        c.push("labels", vec![n], TensorData::U8(self.labels.clone()))?;
        let index: Vec<u32> = self
            .subjects
            .iter()
            .map(|s| ids.iter().position(|x| x == s).unwrap() as u32)
            .collect();
        c.push("subject_index", vec![n], TensorData::U32(index))?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<FeatureSet> {
        let split = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(',').map(str::to_string).collect()
            }
        };
        let band_names = split(c.require_meta("bands")?);
        let channel_names = split(c.require_meta("channels")?);
        let ids = split(c.require_meta("subjects")?);
        let labels = match &c.tensor("labels")?.data {
            TensorData::U8(v) => v.clone(),
            _ => return Err(GeegaError::Format("labels must be u8".into())),
        };
        let n = labels.len();
        let maps = |name: &str, depth: usize| -> Result<Vec<Vec<f64>>> {
            let t = c.tensor(name)?;
            if t.dims != [n, depth, MAP_SIZE, MAP_SIZE] {
                return Err(GeegaError::Format(format!("tensor {name} has shape {:?}", t.dims)));
            }
            let flat = t.data.to_f64();
            Ok(flat.chunks(depth * PIXELS).map(<[f64]>::to_vec).collect::<Vec<_>>())
        };
        let topo = maps("topo", band_names.len())?;
        let spectro = maps("spectro", channel_names.len())?;
        let subjects = match &c.tensor("subject_index")?.data {
            TensorData::U32(v) if v.len() == n => v
                .iter()
                .map(|&i| ids.get(i as usize).cloned().ok_or_else(|| GeegaError::Format("bad subject index".into())))
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(GeegaError::Format("subject_index must be u32 per segment".into())),
        };
        let fs = FeatureSet {
            band_names,
            channel_names,
            topo,
            spectro,
            labels,
            subjects,
        };
        if fs.topo.len() != n && n > 0 {
            return Err(GeegaError::Format("feature counts disagree".into()));
        }
        Ok(fs)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &std::path::Path) -> Result<FeatureSet> {
        let c = Container::read(path, FEATURE_MAGIC)?;
        FeatureSet::from_container(&c).map_err(|e| GeegaError::Ingest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Montage ordered like the recording's channels. Channels are matched by
/// name when every name is known to the montage, otherwise by position.
pub fn align_montage(montage: &Montage, channels: &[String]) -> Result<Montage> {
    let by_name: Option<Vec<Electrode>> = channels
        .iter()
        .map(|c| montage.index_of(c).map(|i| montage.electrodes[i].clone()))
        .collect();
    match by_name {
        Some(e) => Montage::new(&montage.name, e),
        None if montage.len() == channels.len() => Ok(montage.clone()),
        None => Err(GeegaError::Parameter(format!(
            "montage {} has {} electrodes but the recording has {} channels",
            montage.name,
            montage.len(),
            channels.len()
        ))),
    }
}

/// Filter, segment and featurize every recording. With no montage the
/// bundled layout for the channel count is used.
pub fn extract_features(
    recordings: &[EegRecording],
    montage: Option<&Montage>,
    cfg: &FeatureConfig,
) -> Result<FeatureSet> {
    validate_bands(&cfg.bands)?;
    let first = recordings
        .first()
        .ok_or_else(|| GeegaError::Parameter("no recordings to featurize".into()))?;
    let base = match montage {
        Some(m) => m.clone(),
        None => Montage::for_channel_count(first.n_channels()).ok_or_else(|| {
            GeegaError::Parameter(format!("no bundled montage for {} channels", first.n_channels()))
        })?,
    };
    let band_names: Vec<String> = cfg.bands.iter().map(|b| b.name.clone()).collect();
    let mut out = FeatureSet::empty(band_names, first.channels.clone());
    let mut cached: Option<(Vec<String>, TopoGrid)> = None;
    for rec in recordings {
        if rec.n_channels() != first.n_channels() {
            return Err(GeegaError::Parameter(format!(
                "recording of {} has {} channels, expected {}",
                rec.subject_id,
                rec.n_channels(),
                first.n_channels()
            )));
        }
        if cached.as_ref().map_or(true, |(names, _)| names != &rec.channels) {
            let aligned = align_montage(&base, &rec.channels)?;
            cached = Some((rec.channels.clone(), TopoGrid::new(&aligned)?));
        }
        let grid = &cached.as_ref().unwrap().1;
        let filtered = match &cfg.filter {
            Some(f) => filter_recording(rec, f)?,
            None => rec.clone(),
        };
        let segments = segment(&filtered, cfg.window_seconds)?;
        log::debug!("{}: {} segments", rec.subject_id, segments.len());
        for s in segments {
            out.topo.push(topomap(&s, grid, &cfg.bands, &cfg.topo)?);
            out.spectro.push(spectrogram(&s)?);
            out.labels.push(s.label);
            out.subjects.push(s.subject_id);
        }
    }
    Ok(out)
}

/// Per-map-channel standardization fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub topo: Vec<(f64, f64)>,
    pub spectro: Vec<(f64, f64)>,
}

fn channel_stats(maps: &[Vec<f64>], depth: usize) -> Vec<(f64, f64)> {
    (0..depth)
        .map(|d| {
            let vals = || maps.iter().flat_map(move |m| m[d * PIXELS..(d + 1) * PIXELS].iter().copied());
            let n = (maps.len() * PIXELS) as f64;
            let mean = vals().sum::<f64>() / n;
            let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            (mean, if std > 1e-12 { std } else { 1.0 })
        })
        .collect()
}

impl Standardizer {
    pub fn fit(features: &FeatureSet) -> Result<Self> {
        if features.is_empty() {
            return Err(GeegaError::Parameter("cannot fit normalization on an empty split".into()));
        }
        Ok(Standardizer {
            topo: channel_stats(&features.topo, features.n_bands()),
            spectro: channel_stats(&features.spectro, features.n_channels()),
        })
    }

    pub fn apply(&self, features: &mut FeatureSet) {
        let norm = |maps: &mut [Vec<f64>], stats: &[(f64, f64)]| {
            for m in maps {
                for (d, (mean, std)) in stats.iter().enumerate() {
                    for v in &mut m[d * PIXELS..(d + 1) * PIXELS] {
                        *v = (*v - mean) / std;
                    }
                }
            }
        };
        norm(&mut features.topo, &self.topo);
        norm(&mut features.spectro, &self.spectro);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{synthesize, SyntheticSpec};

    fn small_features() -> FeatureSet {
        let spec = SyntheticSpec {
            n_subjects: 2,
            duration_seconds: 30.0,
            ..SyntheticSpec::default()
        };
        extract_features(&synthesize(&spec, 3).unwrap(), None, &FeatureConfig::default()).unwrap()
    }

    #[test]
    fn extraction_counts_and_cache_round_trip() {
        let f = small_features();
        assert_eq!(f.len(), 2 * 2 * 3);
        assert_eq!(f.topo[0].len(), 5 * PIXELS);
        assert_eq!(f.spectro[0].len(), 4 * PIXELS);
        assert_eq!(f.subject_ids(), vec!["S01", "S02"]);
        assert!(f.is_finite());
        let back = FeatureSet::from_container(&f.to_container().unwrap()).unwrap();
        assert_eq!(back.labels, f.labels);
        assert_eq!(back.subjects, f.subjects);
        for (a, b) in back.topo.iter().flatten().zip(f.topo.iter().flatten()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(f.topo_batch(&[0, 3]).shape(), &[2, 5, 32, 32]);
    }

    #[test]
    fn standardizer_centres_the_training_split() {
        let mut f = small_features();
        let s = Standardizer::fit(&f).unwrap();
        s.apply(&mut f);
        let again = Standardizer::fit(&f).unwrap();
        for (m, sd) in again.topo.iter().chain(&again.spectro) {
            assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn montage_alignment() {
        let m = Montage::headband4();
        let names: Vec<String> = ["TP10", "AF7", "AF8", "TP9"].iter().map(|s| s.to_string()).collect();
        let a = align_montage(&m, &names).unwrap();
        assert_eq!(a.names(), names);
        let anon: Vec<String> = (0..4).map(|i| format!("ch{i}")).collect();
        assert_eq!(align_montage(&m, &anon).unwrap(), m);
        assert!(align_montage(&m, &anon[..3]).is_err());
    }
}
