//! Exhaustive enumeration of the generative process.

use std::collections::BTreeMap;
use std::rc::Rc;

use serde_json::json;

use crate::generation::{ExpansionFrame, ExpansionStack, Step, Trajectory};
use crate::grammar::{NontermId, Psdg, StatePoint, StateSet, Symbol, TermId};
use crate::inference::{Observation, StackDistribution, StepReport};

use super::OracleError;

/// Default cap on enumerated entries.
pub const DEFAULT_ENTRY_BOUND: usize = 10_000_000;

/// Every positive-probability execution of at most `horizon` steps. Runs
/// whose root finishes early are kept at their shorter length.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub horizon: usize,
    pub entries: Vec<(Trajectory, f64)>,
}

impl JointTable {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON object per entry, for debugging.
    pub fn to_json_lines(&self, psdg: &Psdg) -> String {
        let mut out = String::new();
        for (traj, p) in &self.entries {
            let states: Vec<String> = (0..=traj.len())
                .map(|t| psdg.state_label(traj.state(t)))
                .collect();
            let terminals: Vec<&str> = traj
                .steps
                .iter()
                .map(|s| psdg.terminals()[s.terminal.0].as_str())
                .collect();
            let line = json!({ "probability": p, "completed": traj.completed, "terminals": terminals, "states": states });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// The state at time `t`, frozen at its final value once the root finished.
/// `None` past the end of an unfinished trajectory.
pub fn state_at(traj: &Trajectory, t: usize) -> Option<&StatePoint> {
    if t <= traj.len() {
        Some(traj.state(t))
    } else if traj.completed {
        Some(traj.state(traj.len()))
    } else {
        None
    }
}

/// The stack active at `t >= 1`. `Some(None)` once the root has finished,
/// `None` past the end of an unfinished trajectory.
pub fn stack_at(traj: &Trajectory, t: usize) -> Option<Option<&ExpansionStack>> {
    if t >= 1 && t <= traj.len() {
        Some(Some(&traj.steps[t - 1].stack))
    } else if traj.completed {
        Some(None)
    } else {
        None
    }
}

fn consistent(traj: &Trajectory, evidence: &[Observation]) -> bool {
    evidence
        .iter()
        .all(|o| state_at(traj, o.t).is_none_or(|q| o.constraint.contains(q)))
}

/// `Pr(query | evidence)` by filtering the table. Evidence past the horizon of
/// an unfinished entry is ignored, so keep evidence within the horizon.
pub fn exact_posterior(
    table: &JointTable,
    evidence: &[Observation],
    query: impl Fn(&Trajectory) -> bool,
) -> Result<f64, OracleError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (traj, p) in &table.entries {
        if consistent(traj, evidence) {
            den += p;
            if query(traj) {
                num += p;
            }
        }
    }
    if den <= 0.0 {
        return Err(OracleError::ZeroEvidenceMass);
    }
    Ok(num / den)
}

/// Whether the frame at index `i` ends with this step by itself: cursor on
/// the last rhs symbol, which is not a tail re-entry.
fn self_terminates(psdg: &Psdg, f: &ExpansionFrame) -> bool {
    let p = psdg.production(f.production);
    let last = p.rhs.len();
    f.cursor == last && !(p.rhs[last - 1] == Symbol::Nonterminal(p.lhs) && last >= 2)
}

/// Termination of the expansion at `level`: it and everything below it end.
pub(crate) fn terminates(psdg: &Psdg, frames: &[ExpansionFrame], level: usize) -> bool {
    frames[level - 1..].iter().all(|f| self_terminates(psdg, f))
}

/// Next stacks after `frames`, each with the product of its fresh production
/// probabilities at `state`. Empty when the root finished.
fn successors(
    psdg: &Psdg,
    frames: &[ExpansionFrame],
    state: &StatePoint,
) -> Vec<(Vec<ExpansionFrame>, f64)> {
    // Deepest frame that does not end by itself; everything below it ended.
    let Some(i) = (0..frames.len())
        .rev()
        .find(|&i| !self_terminates(psdg, &frames[i]))
    else {
        return Vec::new();
    };
    let f = frames[i];
    let p = psdg.production(f.production);
    let mut kept = frames[..i].to_vec();
    let next_symbol = p.rhs[f.cursor];
    let reenters = f.cursor + 1 == p.rhs.len() && next_symbol == Symbol::Nonterminal(p.lhs);
    let (level, symbol) = if reenters {
        (f.level, p.lhs)
    } else {
        kept.push(ExpansionFrame {
            cursor: f.cursor + 1,
            ..f
        });
        match next_symbol {
            Symbol::Terminal(_) => return vec![(kept, 1.0)],
            Symbol::Nonterminal(n) => (f.level + 1, n),
        }
    };
    expansions(psdg, kept, level, symbol, state)
}

/// Every top-down expansion of `symbol` appended to `prefix`, with its
/// probability at `state`; zero-probability choices are dropped.
fn expansions(
    psdg: &Psdg,
    prefix: Vec<ExpansionFrame>,
    level: usize,
    symbol: NontermId,
    state: &StatePoint,
) -> Vec<(Vec<ExpansionFrame>, f64)> {
    let mut out = Vec::new();
    for &a in psdg.productions_of(symbol) {
        let w = psdg.production_probability(a, state);
        if w <= 0.0 {
            continue;
        }
        let mut frames = prefix.clone();
        frames.push(ExpansionFrame {
            level,
            symbol,
            production: a,
            cursor: 1,
        });
        match psdg.production(a).rhs[0] {
            Symbol::Terminal(_) => out.push((frames, w)),
            Symbol::Nonterminal(n) => {
                for (deeper, v) in expansions(psdg, frames, level + 1, n, state) {
                    out.push((deeper, w * v));
                }
            }
        }
    }
    out
}

fn leaf(psdg: &Psdg, frames: &[ExpansionFrame]) -> TermId {
    let f = frames.last().expect("nonempty stack");
    match psdg.production(f.production).rhs[f.cursor - 1] {
        Symbol::Terminal(x) => x,
        Symbol::Nonterminal(_) => unreachable!("stacks end on a terminal"),
    }
}

struct Enumerator<'a> {
    psdg: &'a Psdg,
    horizon: usize,
    evidence: BTreeMap<usize, &'a StateSet>,
    bound: usize,
    free_final_state: bool,
    states: Rc<Vec<StatePoint>>,
    out: Vec<(Trajectory, f64)>,
}

impl Enumerator<'_> {
    fn allowed(&self, t: usize, q: &StatePoint) -> bool {
        self.evidence.get(&t).is_none_or(|s| s.contains(q))
    }

    fn emit(
        &mut self,
        q0: &StatePoint,
        steps: &[Step],
        completed: bool,
        p: f64,
    ) -> Result<(), OracleError> {
        if self.out.len() >= self.bound {
            return Err(OracleError::ExplosionBound { bound: self.bound });
        }
        self.out.push((
            Trajectory {
                seed: None,
                q0: q0.clone(),
                steps: steps.to_vec(),
                completed,
                horizon: self.horizon,
            },
            p,
        ));
        Ok(())
    }

    fn run(&mut self) -> Result<(), OracleError> {
        let states = Rc::clone(&self.states);
        for q0 in states.iter() {
            let p0 = self.psdg.prior_probability(q0);
            if p0 <= 0.0 || !self.allowed(0, q0) {
                continue;
            }
            if self.horizon == 0 {
                self.emit(q0, &[], false, p0)?;
                continue;
            }
            for (frames, w) in expansions(self.psdg, Vec::new(), 1, self.psdg.start(), q0) {
                let mut steps = Vec::new();
                self.walk(q0, 1, frames, q0, p0 * w, &mut steps)?;
            }
        }
        Ok(())
    }

    fn walk(
        &mut self,
        q0: &StatePoint,
        t: usize,
        frames: Vec<ExpansionFrame>,
        prev: &StatePoint,
        p: f64,
        steps: &mut Vec<Step>,
    ) -> Result<(), OracleError> {
        let psdg = self.psdg;
        let x = leaf(psdg, &frames);
        let done = terminates(psdg, &frames, 1);
        let stack =
            ExpansionStack::new(psdg, frames.clone()).expect("enumerated stacks are well formed");
        if t == self.horizon && self.free_final_state && !self.evidence.contains_key(&t) {
            // The final state is unobserved and integrates out.
            steps.push(Step {
                stack,
                terminal: x,
                state: prev.clone(),
            });
            let r = self.emit(q0, steps, done, p);
            steps.pop();
            return r;
        }
        let states = Rc::clone(&self.states);
        for q in states.iter() {
            let tr = psdg.transition_probability(prev, x, q);
            if tr <= 0.0 || !self.allowed(t, q) {
                continue;
            }
            steps.push(Step {
                stack: stack.clone(),
                terminal: x,
                state: q.clone(),
            });
            let pq = p * tr;
            if done {
                let later_ok = self.evidence.range(t + 1..).all(|(_, s)| s.contains(q));
                if later_ok {
                    self.emit(q0, steps, true, pq)?;
                }
            } else if t == self.horizon {
                self.emit(q0, steps, false, pq)?;
            } else {
                for (next, w) in successors(psdg, &frames, q) {
                    self.walk(q0, t + 1, next, q, pq * w, steps)?;
                }
            }
            steps.pop();
        }
        Ok(())
    }
}

fn enumerate_inner(
    psdg: &Psdg,
    horizon: usize,
    evidence: &[Observation],
    bound: usize,
    free_final_state: bool,
) -> Result<JointTable, OracleError> {
    let mut map: BTreeMap<usize, &StateSet> = BTreeMap::new();
    for o in evidence {
        if map.insert(o.t, &o.constraint).is_some() {
            return Err(OracleError::DuplicateEvidence { t: o.t });
        }
    }
    let states: Vec<StatePoint> = psdg.full_set().iter().collect();
    let mut e = Enumerator {
        psdg,
        horizon,
        evidence: map,
        bound,
        free_final_state,
        states: Rc::new(states),
        out: Vec::new(),
    };
    e.run()?;
    Ok(JointTable {
        horizon,
        entries: e.out,
    })
}

/// The full joint over executions of at most `horizon` steps.
pub fn enumerate_joint(psdg: &Psdg, horizon: usize) -> Result<JointTable, OracleError> {
    enumerate_inner(psdg, horizon, &[], DEFAULT_ENTRY_BOUND, false)
}

/// Like [`enumerate_joint`], but only executions consistent with `evidence`
/// are kept (the table's mass is then the evidence probability).
pub fn enumerate_consistent(
    psdg: &Psdg,
    horizon: usize,
    evidence: &[Observation],
    bound: usize,
) -> Result<JointTable, OracleError> {
    enumerate_inner(psdg, horizon, evidence, bound, false)
}

fn add_stack(psdg: &Psdg, dist: &mut StackDistribution, stack: Option<&ExpansionStack>, p: f64) {
    match stack {
        None => dist.add(None, std::iter::empty(), p),
        Some(s) => {
            let frames = s.frames();
            let flags: Vec<bool> = (1..=frames.len())
                .map(|l| terminates(psdg, frames, l))
                .collect();
            dist.add(Some(leaf(psdg, frames)), frames.iter().zip(flags), p);
        }
    }
}

/// Reports computed by brute force, one per observation, in the same shape
/// as the recognizer's. Each report conditions on the observations up to it.
pub fn reference_reports(
    psdg: &Psdg,
    observations: &[Observation],
    bound: usize,
) -> Result<Vec<StepReport>, OracleError> {
    let space = psdg.space();
    let mut reports = Vec::new();
    let mut prev_mass = 1.0;
    for k in 0..observations.len() {
        let t = observations[k].t;
        let table = enumerate_inner(psdg, t + 1, &observations[..=k], bound, true)?;
        let mass = table.total_mass();
        if mass <= 0.0 {
            return Err(OracleError::ZeroEvidenceMass);
        }
        let mut states: BTreeMap<usize, f64> = BTreeMap::new();
        let mut explain = StackDistribution::default();
        let mut predict = StackDistribution::default();
        for (traj, p) in &table.entries {
            let p = p / mass;
            let q = state_at(traj, t).expect("horizon covers t");
            *states.entry(space.index(q)).or_default() += p;
            if t >= 1 {
                add_stack(
                    psdg,
                    &mut explain,
                    stack_at(traj, t).expect("horizon covers t"),
                    p,
                );
            }
            add_stack(
                psdg,
                &mut predict,
                stack_at(traj, t + 1).expect("horizon covers t + 1"),
                p,
            );
        }
        reports.push(StepReport {
            t,
            evidence: mass / prev_mass,
            log_evidence: mass.ln(),
            states: states.into_iter().collect(),
            explain: (t >= 1).then_some(explain),
            predict,
            reinitialized: false,
        });
        prev_mass = mass;
    }
    Ok(reports)
}
