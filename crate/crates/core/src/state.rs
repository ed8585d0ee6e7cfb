use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Which family of driver state conditions a model or dataset uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionType {
    Intention,
    Distraction,
}

impl ConditionType {
    /// Length of the one-hot encoding, which is also the number of
    /// multi-branch heads.
    pub fn num_states(self) -> usize {
        match self {
            ConditionType::Intention => 3,
            ConditionType::Distraction => 2,
        }
    }

    /// Every valid state of this type, in one-hot order.
    pub fn states(self) -> Vec<DriverState> {
        match self {
            ConditionType::Intention => Intention::ALL
                .iter()
                .map(|i| DriverState::Intention(*i))
                .collect(),
            ConditionType::Distraction => Distraction::ALL
                .iter()
                .map(|d| DriverState::Distraction(*d))
                .collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionType::Intention => "intention",
            ConditionType::Distraction => "distraction",
        }
    }
}

impl fmt::Display for ConditionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionType {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intention" => Ok(ConditionType::Intention),
            "distraction" => Ok(ConditionType::Distraction),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown condition type `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intention {
    Left,
    Right,
    Forward,
}

impl Intention {
    pub const ALL: [Intention; 3] = [Intention::Left, Intention::Right, Intention::Forward];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distraction {
    Distracted,
    Attentive,
}

impl Distraction {
    pub const ALL: [Distraction; 2] = [Distraction::Distracted, Distraction::Attentive];
}

/// The conditioning variable: an intersection intention or a distraction
/// state, never both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverState {
    Intention(Intention),
    Distraction(Distraction),
}

impl DriverState {
    /// Assembles a state from its optional parts; exactly one must be set.
    pub fn from_parts(
        intention: Option<Intention>,
        distraction: Option<Distraction>,
    ) -> Result<Self> {
        match (intention, distraction) {
            (Some(i), None) => Ok(DriverState::Intention(i)),
            (None, Some(d)) => Ok(DriverState::Distraction(d)),
            _ => Err(CoreError::InvalidState),
        }
    }

    pub fn condition_type(&self) -> ConditionType {
        match self {
            DriverState::Intention(_) => ConditionType::Intention,
            DriverState::Distraction(_) => ConditionType::Distraction,
        }
    }

    /// Position of the hot entry: left, right, forward for intentions and
    /// distracted, attentive for distraction states.
    pub fn index(&self) -> usize {
        match self {
            DriverState::Intention(Intention::Left) => 0,
            DriverState::Intention(Intention::Right) => 1,
            DriverState::Intention(Intention::Forward) => 2,
            DriverState::Distraction(Distraction::Distracted) => 0,
            DriverState::Distraction(Distraction::Attentive) => 1,
        }
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.condition_type().num_states()];
        v[self.index()] = 1.0;
        v
    }

    /// Inverse of [`DriverState::one_hot`] by argmax.
    pub fn from_one_hot(kind: ConditionType, encoding: &[f64]) -> Result<Self> {
        if encoding.len() != kind.num_states() {
            return Err(CoreError::InvalidState);
        }
        let mut best = 0;
        for (i, v) in encoding.iter().enumerate() {
            if *v > encoding[best] {
                best = i;
            }
        }
        Ok(kind.states()[best])
    }

    pub fn label(&self) -> &'static str {
        match self {
            DriverState::Intention(Intention::Left) => "left",
            DriverState::Intention(Intention::Right) => "right",
            DriverState::Intention(Intention::Forward) => "forward",
            DriverState::Distraction(Distraction::Distracted) => "distracted",
            DriverState::Distraction(Distraction::Attentive) => "attentive",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "left" => Ok(DriverState::Intention(Intention::Left)),
            "right" => Ok(DriverState::Intention(Intention::Right)),
            "forward" => Ok(DriverState::Intention(Intention::Forward)),
            "distracted" => Ok(DriverState::Distraction(Distraction::Distracted)),
            "attentive" => Ok(DriverState::Distraction(Distraction::Attentive)),
            _ => Err(CoreError::InvalidState),
        }
    }
}

impl fmt::Display for DriverState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Free function form of [`DriverState::one_hot`].
pub fn one_hot(state: &DriverState) -> Vec<f64> {
    state.one_hot()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodings() {
        assert_eq!(
            one_hot(&DriverState::Intention(Intention::Left)),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            one_hot(&DriverState::Distraction(Distraction::Attentive)),
            vec![0.0, 1.0]
        );
        assert_eq!(
            DriverState::from_parts(None, None),
            Err(CoreError::InvalidState)
        );
        assert!(DriverState::from_parts(Some(Intention::Left), Some(Distraction::Attentive)).is_err());
    }

    #[test]
    fn one_hot_round_trips_for_every_state() {
        for kind in [ConditionType::Intention, ConditionType::Distraction] {
            for s in kind.states() {
                let enc = s.one_hot();
                assert_eq!(enc.len(), kind.num_states());
                assert_eq!(enc.iter().filter(|v| **v == 1.0).count(), 1);
                assert_eq!(DriverState::from_one_hot(kind, &enc).unwrap(), s);
                assert_eq!(DriverState::from_label(s.label()).unwrap(), s);
            }
        }
    }
}
