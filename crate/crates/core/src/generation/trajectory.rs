//! Trajectories: sampled stack/terminal/state sequences, their probability,
//! and a JSON-lines encoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stack::{
    expansion_terminates, plan_advance, AdvancePlan, ExpansionFrame, ExpansionStack,
};
use super::GenerationError;
use crate::grammar::{Psdg, StatePoint, TermId};

/// Time step `t`: the stack active at `t`, the terminal it emits and the
/// state that follows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub stack: ExpansionStack,
    pub terminal: TermId,
    pub state: StatePoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub seed: Option<u64>,
    pub q0: StatePoint,
    /// `steps[t - 1]` is time step `t`.
    pub steps: Vec<Step>,
    /// The root expansion finished at the last step.
    pub completed: bool,
    pub horizon: usize,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GenerationError> {
    Err(GenerationError::InvalidTrajectory(msg.into()))
}

/// Frames of `stack` that were freshly expanded when it was reached from
/// `prev` (or from nothing, for the first stack).
pub fn fresh_frames<'a>(
    psdg: &Psdg,
    prev: Option<&ExpansionStack>,
    stack: &'a ExpansionStack,
) -> Result<&'a [ExpansionFrame], GenerationError> {
    let (kept, expand) = match prev {
        None => (Vec::new(), Some((1, psdg.start()))),
        Some(p) => match plan_advance(psdg, p) {
            AdvancePlan::Completed => return invalid("step follows a completed root expansion"),
            AdvancePlan::Continue { kept, expand } => (kept, expand),
        },
    };
    let frames = stack.frames();
    if frames.len() < kept.len() || frames[..kept.len()] != kept[..] {
        return invalid("stack does not continue the previous stack");
    }
    let fresh = &frames[kept.len()..];
    match expand {
        None if fresh.is_empty() => Ok(fresh),
        None => invalid("stack expands frames where none are open"),
        Some((level, symbol)) => {
            let head_ok = fresh
                .first()
                .is_some_and(|f: &ExpansionFrame| f.level == level && f.symbol == symbol);
            if !head_ok || fresh.iter().any(|f| f.cursor != 1) {
                return invalid("fresh expansion does not start where the previous stack left off");
            }
            Ok(fresh)
        }
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State `Q^t` for `t` in `0..=len`.
    pub fn state(&self, t: usize) -> &StatePoint {
        if t == 0 {
            &self.q0
        } else {
            &self.steps[t - 1].state
        }
    }

    /// Natural log of the joint probability of this trajectory prefix:
    /// initial state, every freshly sampled production (at the state current
    /// when it was expanded) and every transition. `-inf` if any factor is 0.
    pub fn log_probability(&self, psdg: &Psdg) -> Result<f64, GenerationError> {
        let space = psdg.space();
        if !space.contains(&self.q0) {
            return invalid("initial state is not a state of the grammar");
        }
        if self.steps.len() > self.horizon {
            return invalid("more steps than the horizon");
        }
        let mut lp = psdg.prior_probability(&self.q0).ln();
        let mut prev_state = &self.q0;
        let mut prev_stack: Option<&ExpansionStack> = None;
        for (i, step) in self.steps.iter().enumerate() {
            let stack = ExpansionStack::new(psdg, step.stack.frames().to_vec())
                .map_err(|e| GenerationError::InvalidTrajectory(format!("step {}: {e}", i + 1)))?;
            for f in fresh_frames(psdg, prev_stack, &stack)? {
                lp += psdg.production_probability(f.production, prev_state).ln();
            }
            if step.terminal != stack.leaf_terminal(psdg) {
                return invalid(format!("step {} terminal disagrees with its stack", i + 1));
            }
            if !space.contains(&step.state) {
                return invalid(format!("step {} state is malformed", i + 1));
            }
            lp += psdg
                .transition_probability(prev_state, step.terminal, &step.state)
                .ln();
            prev_state = &step.state;
            prev_stack = Some(&step.stack);
        }
        if let Some(last) = self.steps.last() {
            if self.completed != expansion_terminates(psdg, &last.stack, 1) {
                return invalid("completion flag disagrees with the final stack");
            }
        } else if self.completed {
            return invalid("empty trajectory marked completed");
        }
        Ok(lp)
    }

    /// One header line followed by one line per step.
    pub fn to_json_lines(&self, psdg: &Psdg) -> String {
        let header = Header {
            seed: self.seed,
            q0: state_map(psdg, &self.q0),
            horizon: self.horizon,
            completed: self.completed,
            length: self.steps.len(),
        };
        let mut out = serde_json::to_string(&header).expect("serialisable");
        out.push('\n');
        for (i, step) in self.steps.iter().enumerate() {
            let rec = StepRecord {
                t: i + 1,
                stack: step
                    .stack
                    .frames()
                    .iter()
                    .map(|f| FrameRecord {
                        level: f.level,
                        symbol: psdg.nonterminals()[f.symbol.0].clone(),
                        production: psdg.production(f.production).index,
                        cursor: f.cursor,
                    })
                    .collect(),
                terminal: psdg.terminals()[step.terminal.0].clone(),
                state: state_map(psdg, &step.state),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serialisable"));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`Trajectory::to_json_lines`]. Structure is checked only as
    /// far as names resolve; use [`Trajectory::log_probability`] for the rest.
    pub fn from_json_lines(psdg: &Psdg, text: &str) -> Result<Trajectory, GenerationError> {
        let fmt = |e: serde_json::Error| GenerationError::Format(e.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| GenerationError::Format("missing header".into()))?,
        )
        .map_err(fmt)?;
        let q0 = parse_state(psdg, &header.q0)?;
        let mut steps = Vec::new();
        for (i, line) in lines.enumerate() {
            let rec: StepRecord = serde_json::from_str(line).map_err(fmt)?;
            if rec.t != i + 1 {
                return Err(GenerationError::Format(format!(
                    "expected t={}, found t={}",
                    i + 1,
                    rec.t
                )));
            }
            let mut frames = Vec::new();
            for f in &rec.stack {
                let symbol = psdg.nonterminal(&f.symbol).ok_or_else(|| {
                    GenerationError::Format(format!("unknown nonterminal `{}`", f.symbol))
                })?;
                let production = psdg.production_by_index(f.production).ok_or_else(|| {
                    GenerationError::Format(format!("unknown production {}", f.production))
                })?;
                frames.push(ExpansionFrame {
                    level: f.level,
                    symbol,
                    production,
                    cursor: f.cursor,
                });
            }
            let terminal = psdg.terminal(&rec.terminal).ok_or_else(|| {
                GenerationError::Format(format!("unknown terminal `{}`", rec.terminal))
            })?;
            steps.push(Step {
                stack: ExpansionStack::from_frames_unchecked(frames),
                terminal,
                state: parse_state(psdg, &rec.state)?,
            });
        }
        if steps.len() != header.length {
            return Err(GenerationError::Format(format!(
                "header announces {} steps, found {}",
                header.length,
                steps.len()
            )));
        }
        Ok(Trajectory {
            seed: header.seed,
            q0,
            steps,
            completed: header.completed,
            horizon: header.horizon,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    seed: Option<u64>,
    q0: BTreeMap<String, String>,
    horizon: usize,
    completed: bool,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    level: usize,
    symbol: String,
    production: u32,
    cursor: usize,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    stack: Vec<FrameRecord>,
    terminal: String,
    state: BTreeMap<String, String>,
}

pub(crate) fn state_map(psdg: &Psdg, q: &StatePoint) -> BTreeMap<String, String> {
    psdg.features()
        .iter()
        .zip(q.values())
        .map(|(f, &v)| (f.name.clone(), f.values[v].clone()))
        .collect()
}

fn parse_state(psdg: &Psdg, map: &BTreeMap<String, String>) -> Result<StatePoint, GenerationError> {
    if map.len() != psdg.features().len() {
        return Err(GenerationError::Format(
            "state must assign every feature".into(),
        ));
    }
    psdg.state_from_labels(map.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .ok_or_else(|| GenerationError::Format("state names an unknown feature or value".into()))
}
