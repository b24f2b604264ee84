//! Driving a recognizer over an observation stream with gaps.

use super::engine::Recognizer;
use super::report::StepReport;
use super::{BeliefState, InferenceError, Observation, RecognizerOptions};
use crate::grammar::Psdg;

/// What to do when an observation contradicts everything believed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroEvidencePolicy {
    /// Fail with [`InferenceError::ZeroEvidence`].
    #[default]
    Error,
    /// Restart from the prior restricted to the observation, as if the
    /// stream began there. Cumulative evidence restarts too.
    Reinit,
}

/// Streaming recognizer: one report per observation. Missing time steps are
/// filled with vacuous observations that produce no report.
#[derive(Debug, Clone)]
pub struct Filter<'g> {
    recognizer: Recognizer<'g>,
    belief: Option<BeliefState>,
    policy: ZeroEvidencePolicy,
    last: Option<usize>,
}

impl<'g> Filter<'g> {
    pub fn new(
        psdg: &'g Psdg,
        options: RecognizerOptions,
        policy: ZeroEvidencePolicy,
    ) -> Result<Self, InferenceError> {
        Ok(Filter {
            recognizer: Recognizer::new(psdg, options)?,
            belief: None,
            policy,
            last: None,
        })
    }

    pub fn recognizer(&self) -> &Recognizer<'g> {
        &self.recognizer
    }

    /// Current belief, once the first observation has been processed.
    pub fn belief(&self) -> Option<&BeliefState> {
        self.belief.as_ref()
    }

    pub fn observe(&mut self, obs: &Observation) -> Result<StepReport, InferenceError> {
        if let Some(previous) = self.last {
            if obs.t <= previous {
                return Err(InferenceError::TimeOrder {
                    previous,
                    found: obs.t,
                });
            }
        }
        let psdg = self.recognizer.psdg();
        let mut belief = match self.belief.take() {
            Some(b) => b,
            None if obs.t == 0 => {
                let b = self.recognizer.init_belief(&obs.constraint)?;
                let report = self
                    .recognizer
                    .initial_report(0, b.log_evidence().exp(), &b, false);
                self.belief = Some(b);
                self.last = Some(0);
                return Ok(report);
            }
            None => self.recognizer.init_belief(&psdg.full_set())?,
        };
        while belief.time() < obs.t {
            let vacuous = Observation::vacuous(psdg, belief.time());
            belief = self.recognizer.step(&belief, &vacuous)?.1;
        }
        let report = match self.recognizer.step(&belief, obs) {
            Ok((report, next)) => {
                self.belief = Some(next);
                report
            }
            Err(InferenceError::ZeroEvidence { .. })
                if self.policy == ZeroEvidencePolicy::Reinit =>
            {
                let mut b = self.recognizer.init_belief(&obs.constraint)?;
                b.time = obs.t + 1;
                let report =
                    self.recognizer
                        .initial_report(obs.t, b.log_evidence().exp(), &b, true);
                self.belief = Some(b);
                report
            }
            Err(e) => {
                self.belief = Some(belief);
                return Err(e);
            }
        };
        self.last = Some(obs.t);
        Ok(report)
    }
}
