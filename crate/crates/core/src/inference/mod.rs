//! Online recognition from partial state observations.
//!
//! The belief carried between steps is, for every live state `q` of the last
//! observed time, the exact conditional distribution over whole stack
//! configurations (plus the absorbing completed configuration). The six
//! per-level tables of the compact belief representation are exact marginals
//! of it, available through [`Recognizer::tables`].
//!
//! Indexing: an observation at time `k` constrains `Q^k`. Its report gives
//! the posterior of `Q^k`, explains the stack active at `k` and predicts the
//! stack at `k + 1`, all given the evidence through `k`.

mod belief;
mod config;
mod engine;
mod report;
mod stream;

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::grammar::{Psdg, StateSet};

pub use belief::{BeliefState, BeliefTables};
pub use config::ConfigId;
pub use engine::{Explanation, Prediction, Recognizer};
pub use report::{Deviation, LevelDistribution, StackDistribution, StepReport};
pub use stream::{Filter, ZeroEvidencePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("observation at t={t} has zero probability given the earlier evidence")]
    ZeroEvidence { t: usize },

    #[error("support of {size} states exceeds the bound {bound}")]
    SupportTooLarge { size: u128, bound: usize },

    #[error("conditional is undefined: the conditioning event has zero probability")]
    UndefinedConditional,

    #[error("more than {bound} stack configurations")]
    TooManyConfigurations { bound: usize },

    #[error("observation times must increase: t={found} after t={previous}")]
    TimeOrder { previous: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservationError {
    #[error("malformed observation: {0}")]
    Json(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("`{value}` is not a value of `{feature}`")]
    UnknownValue { feature: String, value: String },

    #[error("feature `{0}` is restricted to no values")]
    Empty(String),
}

#[derive(Debug, Clone)]
pub struct RecognizerOptions {
    /// Largest observation set (and hence belief support) accepted.
    pub support_bound: usize,
    /// Cap on distinct stack configurations tracked.
    pub max_configurations: usize,
    /// Test hook: perturbs every belief update so that cross-checks must fail.
    #[doc(hidden)]
    pub corrupt_update: bool,
}

impl Default for RecognizerOptions {
    fn default() -> Self {
        RecognizerOptions {
            support_bound: 4096,
            max_configurations: 1_000_000,
            corrupt_update: false,
        }
    }
}

/// `Q^t` is known to lie in `constraint`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub constraint: StateSet,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservation {
    t: usize,
    #[serde(default)]
    observe: BTreeMap<String, Vec<String>>,
}

impl Observation {
    pub fn vacuous(psdg: &Psdg, t: usize) -> Self {
        Observation {
            t,
            constraint: psdg.full_set(),
        }
    }

    /// Parses `{"t": k, "observe": {"feature": ["v1", ...], ...}}`. Omitted
    /// features are unconstrained.
    pub fn from_json(psdg: &Psdg, line: &str) -> Result<Self, ObservationError> {
        let raw: RawObservation =
            serde_json::from_str(line).map_err(|e| ObservationError::Json(e.to_string()))?;
        let mut constraint = psdg.full_set();
        for (name, values) in &raw.observe {
            let fi = psdg
                .feature_index(name)
                .ok_or_else(|| ObservationError::UnknownFeature(name.clone()))?;
            let feature = &psdg.features()[fi];
            let mut idx = Vec::new();
            for v in values {
                idx.push(
                    feature
                        .value_index(v)
                        .ok_or_else(|| ObservationError::UnknownValue {
                            feature: name.clone(),
                            value: v.clone(),
                        })?,
                );
            }
            if !constraint.restrict(fi, &idx) {
                return Err(ObservationError::Empty(name.clone()));
            }
        }
        Ok(Observation {
            t: raw.t,
            constraint,
        })
    }

    /// Inverse of [`Observation::from_json`]; unconstrained features are omitted.
    pub fn to_json(&self, psdg: &Psdg) -> String {
        let mut observe = BTreeMap::new();
        for (fi, f) in psdg.features().iter().enumerate() {
            if self.constraint.is_unconstrained(fi) {
                continue;
            }
            let vals: Vec<&str> = f
                .values
                .iter()
                .enumerate()
                .filter(|(v, _)| self.constraint.allows(fi, *v))
                .map(|(_, s)| s.as_str())
                .collect();
            observe.insert(f.name.as_str(), vals);
        }
        serde_json::json!({ "t": self.t, "observe": observe }).to_string()
    }
}
