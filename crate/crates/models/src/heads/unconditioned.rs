use drivattn_core::{ConditionType, DriverState};
use rand_chacha::ChaCha8Rng;

use super::{ConditioningHead, Decoder, HeadSpec};
use crate::error::{ModelError, Result};
use crate::params::{Forward, ParamStore};
use crate::tape::Var;

/// A single attention branch; driver state is ignored.
#[derive(Debug)]
pub struct UnconditionedHead {
    decoder: Decoder,
}

impl UnconditionedHead {
    pub fn build(
        spec: &HeadSpec,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn ConditioningHead>> {
        if spec.condition_type.is_some() {
            return Err(ModelError::Config("unconditioned head takes no condition type".into()));
        }
        Ok(Box::new(Self {
            decoder: Decoder::new(spec, store, rng, "head"),
        }))
    }
}

impl ConditioningHead for UnconditionedHead {
    fn name(&self) -> &'static str {
        "unconditioned"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        None
    }

    fn forward(&self, fwd: &mut Forward, input: Var, _state: Option<&DriverState>) -> Result<Var> {
        Ok(self.decoder.forward(fwd, input))
    }
}
