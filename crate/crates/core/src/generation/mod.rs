//! Generative process: sampling plan executions and scoring trajectories.
//!
//! Per time step `t` the current stack emits its leaf terminal, the next state
//! is drawn from the transition model given the previous state and that
//! terminal, and then the stack advances, sampling any fresh productions at
//! the new state. The root finishing ends the trajectory.

mod stack;
mod trajectory;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::{NontermId, ProdId, Psdg, StatePoint, Symbol, TermId};

pub use stack::{expansion_terminates, plan_advance, AdvancePlan, ExpansionFrame, ExpansionStack};
pub use trajectory::{fresh_frames, Step, Trajectory};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no production of `{nonterminal}` has positive probability in state {state}")]
    DeadEnd { nonterminal: String, state: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("malformed trajectory record: {0}")]
    Format(String),
}

/// Source of every random choice made while generating.
pub trait Chooser {
    fn production(
        &mut self,
        psdg: &Psdg,
        symbol: NontermId,
        state: &StatePoint,
    ) -> Result<ProdId, GenerationError>;
    fn initial_state(&mut self, psdg: &Psdg) -> StatePoint;
    fn next_state(&mut self, psdg: &Psdg, prev: &StatePoint, terminal: TermId) -> StatePoint;
}

fn categorical<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    if total <= 0.0 {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return last;
        }
    }
    last
}

/// Draws everything from a seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct RngChooser {
    rng: ChaCha8Rng,
}

impl RngChooser {
    pub fn new(seed: u64) -> Self {
        RngChooser {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Chooser for RngChooser {
    fn production(
        &mut self,
        psdg: &Psdg,
        symbol: NontermId,
        state: &StatePoint,
    ) -> Result<ProdId, GenerationError> {
        let prods = psdg.productions_of(symbol);
        categorical(
            &mut self.rng,
            prods.iter().map(|&p| psdg.production_probability(p, state)),
        )
        .map(|i| prods[i])
        .ok_or_else(|| GenerationError::DeadEnd {
            nonterminal: psdg.symbol_name(Symbol::Nonterminal(symbol)).to_string(),
            state: psdg.state_label(state),
        })
    }

    fn initial_state(&mut self, psdg: &Psdg) -> StatePoint {
        let values = psdg
            .features()
            .iter()
            .map(|f| {
                categorical(&mut self.rng, f.prior.iter().copied()).expect("priors sum to one")
            })
            .collect();
        StatePoint(values)
    }

    fn next_state(&mut self, psdg: &Psdg, prev: &StatePoint, terminal: TermId) -> StatePoint {
        let nt = psdg.terminals().len();
        let values = psdg
            .features()
            .iter()
            .map(|f| {
                categorical(
                    &mut self.rng,
                    f.next_distribution(prev, terminal, nt).iter().copied(),
                )
                .expect("cpt rows sum to one")
            })
            .collect();
        StatePoint(values)
    }
}

/// Replays scripted productions and states in draw order, then falls back to
/// a seeded generator once a script runs out.
#[derive(Debug, Clone)]
pub struct ScriptedChooser {
    productions: VecDeque<ProdId>,
    states: VecDeque<StatePoint>,
    fallback: RngChooser,
}

impl ScriptedChooser {
    /// `states` starts with the initial state.
    pub fn new(productions: Vec<ProdId>, states: Vec<StatePoint>, seed: u64) -> Self {
        ScriptedChooser {
            productions: productions.into(),
            states: states.into(),
            fallback: RngChooser::new(seed),
        }
    }
}

impl Chooser for ScriptedChooser {
    fn production(
        &mut self,
        psdg: &Psdg,
        symbol: NontermId,
        state: &StatePoint,
    ) -> Result<ProdId, GenerationError> {
        match self.productions.pop_front() {
            Some(p) if psdg.production(p).lhs == symbol => Ok(p),
            Some(p) => Err(GenerationError::InvalidTrajectory(format!(
                "scripted production {} cannot expand {}",
                psdg.production(p).index,
                psdg.symbol_name(Symbol::Nonterminal(symbol))
            ))),
            None => self.fallback.production(psdg, symbol, state),
        }
    }

    fn initial_state(&mut self, psdg: &Psdg) -> StatePoint {
        self.states
            .pop_front()
            .unwrap_or_else(|| self.fallback.initial_state(psdg))
    }

    fn next_state(&mut self, psdg: &Psdg, prev: &StatePoint, terminal: TermId) -> StatePoint {
        self.states
            .pop_front()
            .unwrap_or_else(|| self.fallback.next_state(psdg, prev, terminal))
    }
}

/// Expands `symbol` at `level` top-down until a terminal is reached, pushing
/// the new frames onto `frames`.
fn expand_fresh(
    psdg: &Psdg,
    frames: &mut Vec<ExpansionFrame>,
    mut level: usize,
    mut symbol: NontermId,
    state: &StatePoint,
    chooser: &mut dyn Chooser,
) -> Result<(), GenerationError> {
    loop {
        let production = chooser.production(psdg, symbol, state)?;
        frames.push(ExpansionFrame {
            level,
            symbol,
            production,
            cursor: 1,
        });
        match psdg.production(production).rhs[0] {
            Symbol::Terminal(_) => return Ok(()),
            Symbol::Nonterminal(n) => {
                symbol = n;
                level += 1;
            }
        }
    }
}

/// The stack at time 1: the start symbol expanded under the initial state.
pub fn initial_stack(
    psdg: &Psdg,
    state: &StatePoint,
    chooser: &mut dyn Chooser,
) -> Result<ExpansionStack, GenerationError> {
    let mut frames = Vec::new();
    expand_fresh(psdg, &mut frames, 1, psdg.start(), state, chooser)?;
    Ok(ExpansionStack::from_frames_unchecked(frames))
}

/// Moves `stack` one step forward, sampling fresh productions under `state`.
/// Returns `None` once the root expansion has finished.
pub fn advance_stack(
    psdg: &Psdg,
    stack: &ExpansionStack,
    state: &StatePoint,
    chooser: &mut dyn Chooser,
) -> Result<Option<ExpansionStack>, GenerationError> {
    match plan_advance(psdg, stack) {
        AdvancePlan::Completed => Ok(None),
        AdvancePlan::Continue { mut kept, expand } => {
            if let Some((level, symbol)) = expand {
                expand_fresh(psdg, &mut kept, level, symbol, state, chooser)?;
            }
            Ok(Some(ExpansionStack::from_frames_unchecked(kept)))
        }
    }
}

/// Samples a trajectory of at most `horizon` steps.
pub fn sample_trajectory(psdg: &Psdg, horizon: usize, seed: u64) -> Trajectory {
    let mut chooser = RngChooser::new(seed);
    let mut traj =
        sample_with(psdg, horizon, &mut chooser).expect("validated grammars cannot dead-end");
    traj.seed = Some(seed);
    traj
}

/// Samples a trajectory drawing every choice from `chooser`.
pub fn sample_with(
    psdg: &Psdg,
    horizon: usize,
    chooser: &mut dyn Chooser,
) -> Result<Trajectory, GenerationError> {
    let q0 = chooser.initial_state(psdg);
    let mut steps: Vec<Step> = Vec::new();
    let mut stack = initial_stack(psdg, &q0, chooser)?;
    let mut prev = q0.clone();
    let mut completed = false;
    for t in 1..=horizon {
        let terminal = stack.leaf_terminal(psdg);
        let state = chooser.next_state(psdg, &prev, terminal);
        completed = expansion_terminates(psdg, &stack, 1);
        let next = if completed || t == horizon {
            None
        } else {
            advance_stack(psdg, &stack, &state, chooser)?
        };
        steps.push(Step {
            stack,
            terminal,
            state: state.clone(),
        });
        prev = state;
        match next {
            Some(s) => stack = s,
            None => break,
        }
    }
    Ok(Trajectory {
        seed: None,
        q0,
        steps,
        completed,
        horizon,
    })
}

/// Natural-log probability of a trajectory; see [`Trajectory::log_probability`].
pub fn trajectory_probability(
    psdg: &Psdg,
    trajectory: &Trajectory,
) -> Result<f64, GenerationError> {
    trajectory.log_probability(psdg)
}
