//! Self-describing JSON checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{CondConvLayerConfig, ModelConfig};
use crate::encoder::Backbone;
use crate::error::{ModelError, Result};
use crate::model::AttentionModel;
use crate::params::NamedTensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Redundant with `config`; kept so the file is readable on its own and
    /// checked on load.
    pub cond_conv_layers: Vec<CondConvLayerConfig>,
    pub params: Vec<NamedTensor>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_model(model: &AttentionModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: model.config().clone(),
            cond_conv_layers: model.config().cond_conv_layers(),
            params: model.params().entries().to_vec(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Rebuilds the model and copies the stored tensors in, checking every
    /// name and shape against the configuration.
    pub fn into_model(self) -> Result<AttentionModel> {
        self.check_header()?;
        let mut model = AttentionModel::new(self.config.clone(), 0)?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    /// As [`into_model`](Self::into_model) for models over an external
    /// backbone.
    pub fn into_model_with_backbone(self, backbone: Box<dyn Backbone>) -> Result<AttentionModel> {
        self.check_header()?;
        let mut model = AttentionModel::with_backbone(self.config.clone(), 0, backbone)?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    fn check_header(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.cond_conv_layers != self.config.cond_conv_layers() {
            return Err(ModelError::Checkpoint(
                "conditional layer description disagrees with the model config".into(),
            ));
        }
        Ok(())
    }

    fn load_into(self, model: &mut AttentionModel) -> Result<()> {
        let store = model.params_mut();
        if store.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for NamedTensor { name, tensor } in self.params {
            let slot = store
                .by_name_mut(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unexpected tensor `{name}`")))?;
            if slot.shape != tensor.shape || tensor.data.len() != slot.data.len() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    tensor.shape, slot.shape
                )));
            }
            if tensor.data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Checkpoint(format!("tensor `{name}` holds non-finite values")));
            }
            *slot = tensor;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        fs::write(path, json).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

pub fn save_model(model: &AttentionModel, path: &Path) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_model(path: &Path) -> Result<AttentionModel> {
    Checkpoint::load(path)?.into_model()
}
