use std::path::Path;

use crate::autodiff::{Component, ParameterSet, Tensor};
use crate::container::{Container, TensorData};
use crate::error::{GeegaError, Result};
use crate::features::Standardizer;
use crate::model::{Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GEEC";

/// Trained parameters plus everything needed to rebuild the network and
/// preprocess new inputs.
///
/// On disk: a container with magic `GEEC`. Metadata holds `model_config`
/// and `standardizer` as JSON, the band and channel names, and a
/// `component.<name>` tag per parameter. Each parameter is an f32 tensor
/// under its own name.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub standardizer: Option<Standardizer>,
    pub band_names: Vec<String>,
    pub channel_names: Vec<String>,
    pub params: ParameterSet,
}

fn json_err(key: &str, e: serde_json::Error) -> GeegaError {
    GeegaError::Format(format!("checkpoint field {key}: {e}"))
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(CHECKPOINT_MAGIC);
        c.set_meta("model_config", serde_json::to_string(&self.model).map_err(|e| json_err("model_config", e))?);
        c.set_meta(
            "standardizer",
            serde_json::to_string(&self.standardizer).map_err(|e| json_err("standardizer", e))?,
        );
        c.set_meta("bands", self.band_names.join(","));
        c.set_meta("channels", self.channel_names.join(","));
        for (_, p) in self.params.iter() {
            c.set_meta(&format!("component.{}", p.name), p.component.as_str());
            let data = p.value.data().iter().map(|&v| v as f32).collect();
            c.push(&p.name, p.value.shape().to_vec(), TensorData::F32(data))?;
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Checkpoint> {
        let model: ModelConfig =
            serde_json::from_str(c.require_meta("model_config")?).map_err(|e| json_err("model_config", e))?;
        let standardizer: Option<Standardizer> =
            serde_json::from_str(c.require_meta("standardizer")?).map_err(|e| json_err("standardizer", e))?;
        let names = |key: &str| -> Result<Vec<String>> {
            let v = c.require_meta(key)?;
            Ok(if v.is_empty() { Vec::new() } else { v.split(',').map(str::to_string).collect() })
        };
        let (_, mut params) = Model::new(&model, 0)?;
        let mut stored = ParameterSet::new();
        for t in &c.tensors {
            let tag: Component = c.require_meta(&format!("component.{}", t.name))?.parse()?;
            let own = params
                .id(&t.name)
                .ok_or_else(|| GeegaError::Format(format!("checkpoint has unknown parameter `{}`", t.name)))?;
            if params.get(own).component != tag {
                return Err(GeegaError::Format(format!("parameter `{}` is tagged {tag}", t.name)));
            }
            stored.add(&t.name, tag, Tensor::new(t.dims.clone(), t.data.to_f64())?, false)?;
        }
        params.load_values(&stored)?;
        Ok(Checkpoint {
            model,
            standardizer,
            band_names: names("bands")?,
            channel_names: names("channels")?,
            params,
        })
    }

    /// The network described by the checkpoint, loaded with its values.
    pub fn build(&self) -> Result<(Model, ParameterSet)> {
        let (model, mut params) = Model::new(&self.model, 0)?;
        params.load_values(&self.params)?;
        Ok((model, params))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_container(&Container::read(path, CHECKPOINT_MAGIC)?)
    }
}
