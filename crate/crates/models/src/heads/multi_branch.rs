use drivattn_core::{ConditionType, DriverState};
use rand_chacha::ChaCha8Rng;

use super::{check_state, ConditioningHead, Decoder, HeadSpec};
use crate::error::{ModelError, Result};
use crate::params::{Forward, ParamStore};
use crate::tape::Var;

/// One decoder branch per driver state over the shared encoder.
#[derive(Debug)]
pub struct MultiBranchHead {
    condition_type: ConditionType,
    branches: Vec<Decoder>,
}

impl MultiBranchHead {
    pub fn build(
        spec: &HeadSpec,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn ConditioningHead>> {
        let condition_type = spec.require_condition("multi-branch")?;
        let branches = (0..condition_type.num_states())
            .map(|k| Decoder::new(spec, store, rng, &format!("head.branch{k}")))
            .collect();
        Ok(Box::new(Self {
            condition_type,
            branches,
        }))
    }
}

/// Branch index for `state`: the hot position of its one-hot encoding.
pub fn multi_branch_select(state: &DriverState, num_branches: usize) -> Result<usize> {
    let encoding = state.one_hot();
    if encoding.len() != num_branches {
        return Err(ModelError::Config(format!(
            "{} branches for a {}-state condition",
            num_branches,
            encoding.len()
        )));
    }
    Ok(state.index())
}

impl ConditioningHead for MultiBranchHead {
    fn name(&self) -> &'static str {
        "multi-branch"
    }

    fn condition_type(&self) -> Option<ConditionType> {
        Some(self.condition_type)
    }

    fn forward(&self, fwd: &mut Forward, input: Var, state: Option<&DriverState>) -> Result<Var> {
        let state = check_state(self.condition_type, state)?;
        let k = multi_branch_select(&state, self.branches.len())?;
        Ok(self.branches[k].forward(fwd, input))
    }
}
