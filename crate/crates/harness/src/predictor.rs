//! Attention predictors selectable by name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use drivattn_core::{AttentionMap, ConditionType, DriverState, FrameSample};
use drivattn_models::{load_model, AttentionModel, SequenceBatch};

use crate::error::{HarnessError, Result};

/// Maps a contiguous run of frames to one attention map per frame.
///
/// `states` holds the driver state to condition on for each frame; it may
/// differ from the recorded state, which is how counterfactual predictions
/// are made.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn condition_type(&self) -> Option<ConditionType>;

    fn predict(&self, frames: &[FrameSample], states: &[DriverState]) -> Result<Vec<AttentionMap>>;
}

#[derive(Debug)]
pub struct ModelPredictor {
    model: AttentionModel,
}

impl ModelPredictor {
    pub fn new(model: AttentionModel) -> Result<Self> {
        if model.config().extra_input_channels != 0 {
            return Err(HarnessError::Config(
                "calibration networks are not attention predictors".into(),
            ));
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &AttentionModel {
        &self.model
    }
}

impl Predictor for ModelPredictor {
    fn name(&self) -> &str {
        self.model.head_name()
    }

    fn condition_type(&self) -> Option<ConditionType> {
        self.model.condition_type()
    }

    fn predict(&self, frames: &[FrameSample], states: &[DriverState]) -> Result<Vec<AttentionMap>> {
        let batch = SequenceBatch {
            frames: frames.iter().map(|f| &f.frame).collect(),
            states: if self.model.condition_type().is_some() {
                states.to_vec()
            } else {
                Vec::new()
            },
            ..Default::default()
        };
        Ok(self.model.predict_batch(&batch)?)
    }
}

/// Returns the recorded ground truth; a perfect reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        None
    }

    fn predict(&self, frames: &[FrameSample], _states: &[DriverState]) -> Result<Vec<AttentionMap>> {
        Ok(frames.iter().map(|f| f.gt_map.clone()).collect())
    }
}

/// Uniform maps at the ground-truth resolution; the chance reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn name(&self) -> &str {
        "uniform"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        None
    }

    fn predict(&self, frames: &[FrameSample], _states: &[DriverState]) -> Result<Vec<AttentionMap>> {
        Ok(frames
            .iter()
            .map(|f| AttentionMap::uniform(f.gt_map.height(), f.gt_map.width()))
            .collect())
    }
}

/// What a predictor factory may draw on.
#[derive(Debug, Clone, Default)]
pub struct PredictorSource {
    pub checkpoint: Option<PathBuf>,
}

pub type PredictorFactory = fn(&PredictorSource) -> Result<Box<dyn Predictor>>;

#[derive(Clone)]
pub struct PredictorRegistry {
    factories: BTreeMap<String, PredictorFactory>,
}

impl fmt::Debug for PredictorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

fn from_checkpoint(src: &PredictorSource) -> Result<Box<dyn Predictor>> {
    let path = src
        .checkpoint
        .as_ref()
        .ok_or_else(|| HarnessError::Config("the model predictor needs a checkpoint".into()))?;
    Ok(Box::new(ModelPredictor::new(load_model(path)?)?))
}

impl Default for PredictorRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register("model", from_checkpoint);
        reg.register("oracle", |_| Ok(Box::new(OraclePredictor)));
        reg.register("uniform", |_| Ok(Box::new(UniformPredictor)));
        reg
    }
}

impl PredictorRegistry {
    pub fn register(&mut self, name: &str, factory: PredictorFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, src: &PredictorSource) -> Result<Box<dyn Predictor>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| HarnessError::UnknownPredictor(name.to_string()))?;
        f(src)
    }

    /// Resolves a command-line reference: `stub:<name>` selects a stub,
    /// anything else is a checkpoint path for the `model` predictor.
    pub fn resolve(&self, reference: &str) -> Result<Box<dyn Predictor>> {
        match reference.strip_prefix("stub:") {
            Some(name) => self.build(name, &PredictorSource::default()),
            None => self.build(
                "model",
                &PredictorSource {
                    checkpoint: Some(PathBuf::from(reference)),
                },
            ),
        }
    }
}
