//! The three phases of one inference cycle.

use std::collections::BTreeMap;

use crate::grammar::{NontermId, ProdId, Psdg, StateSet, Symbol};

use super::belief::{BeliefState, BeliefTables};
use super::config::{ConfigId, ConfigSpace};
use super::report::{StackDistribution, StepReport};
use super::{InferenceError, Observation, RecognizerOptions};

/// Exact recognizer for one grammar. Holds the lazily grown configuration
/// space, so it is the mutable half of a stream; beliefs are plain values.
#[derive(Debug, Clone)]
pub struct Recognizer<'g> {
    psdg: &'g Psdg,
    configs: ConfigSpace,
    options: RecognizerOptions,
}

/// Joint mass of (stack at `t`, `Q^t`) for every active configuration and
/// every state of the observation set, before normalisation.
#[derive(Debug, Clone)]
pub struct Explanation {
    t: usize,
    targets: Vec<usize>,
    active: Vec<ConfigId>,
    mass: Vec<f64>,
    joint: Vec<f64>,
    evidence: f64,
}

impl Explanation {
    /// `Pr(Q^t in R^t | evidence before t)`.
    pub fn evidence(&self) -> f64 {
        self.evidence
    }
}

/// Unnormalised joint of (`Q^t`, stack at `t + 1`), per observed state.
#[derive(Debug, Clone)]
pub struct Prediction {
    next: Vec<Vec<(ConfigId, f64)>>,
}

impl<'g> Recognizer<'g> {
    pub fn new(psdg: &'g Psdg, options: RecognizerOptions) -> Result<Self, InferenceError> {
        Ok(Recognizer {
            psdg,
            configs: ConfigSpace::new(psdg, options.max_configurations)?,
            options,
        })
    }

    pub fn psdg(&self) -> &'g Psdg {
        self.psdg
    }

    pub fn options(&self) -> &RecognizerOptions {
        &self.options
    }

    /// Distinct stack configurations discovered so far.
    pub fn configuration_count(&self) -> usize {
        self.configs.len()
    }

    fn enumerate(&self, constraint: &StateSet) -> Result<Vec<usize>, InferenceError> {
        let size = constraint.len();
        if size > self.options.support_bound as u128 {
            return Err(InferenceError::SupportTooLarge {
                size,
                bound: self.options.support_bound,
            });
        }
        let space = self.psdg.space();
        Ok(constraint.iter().map(|q| space.index(&q)).collect())
    }

    /// Belief at time 1 given `Q^0 in initial`: the initial state posterior
    /// and the top-down expansion of the start symbol under each state.
    pub fn init_belief(&self, initial: &StateSet) -> Result<BeliefState, InferenceError> {
        let states = self.enumerate(initial)?;
        let priors: Vec<f64> = states
            .iter()
            .map(|&q| self.psdg.prior_probability_at(q))
            .collect();
        let evidence: f64 = priors.iter().sum();
        if evidence <= 0.0 {
            return Err(InferenceError::ZeroEvidence { t: 0 });
        }
        let mut belief = BeliefState {
            time: 1,
            support: Vec::new(),
            weights: Vec::new(),
            cond: Vec::new(),
            log_evidence: evidence.ln(),
        };
        for (&q, &p) in states.iter().zip(&priors) {
            if p <= 0.0 {
                continue;
            }
            let mut row = Vec::new();
            for edge in self.configs.initial() {
                let w: f64 = edge
                    .fresh
                    .iter()
                    .map(|&a| self.psdg.production_probability_at(a, q))
                    .product();
                if w > 0.0 {
                    row.push((edge.target, w));
                }
            }
            row.sort_by_key(|e| e.0);
            belief.support.push(q);
            belief.weights.push(p / evidence);
            belief.cond.push(row);
        }
        self.corrupt(&mut belief);
        Ok(belief)
    }

    /// Weighs every (configuration, next state) pair by the transition into
    /// the observation set.
    pub fn explain(
        &self,
        belief: &BeliefState,
        obs: &Observation,
    ) -> Result<Explanation, InferenceError> {
        if obs.t != belief.time {
            return Err(InferenceError::TimeOrder {
                previous: belief.time.saturating_sub(1),
                found: obs.t,
            });
        }
        let psdg = self.psdg;
        let space = psdg.space();
        let targets = self.enumerate(&obs.constraint)?;
        let nt = targets.len();
        let digits: Vec<Vec<usize>> = targets.iter().map(|&q| space.point(q).0).collect();

        let mut active: Vec<ConfigId> = belief
            .cond
            .iter()
            .flat_map(|r| r.iter().map(|e| e.0))
            .collect();
        active.sort_unstable();
        active.dedup();
        let mut mass = vec![0.0; active.len() * nt];

        for (i, &s) in belief.support.iter().enumerate() {
            let mut cache: Vec<Option<Vec<f64>>> = vec![None; psdg.terminals().len()];
            for &(c, p) in &belief.cond[i] {
                let a = belief.weights[i] * p;
                if a == 0.0 {
                    continue;
                }
                let ci = active.binary_search(&c).expect("collected above");
                let row = &mut mass[ci * nt..(ci + 1) * nt];
                if c == ConfigId::COMPLETED {
                    if let Ok(j) = targets.binary_search(&s) {
                        row[j] += a;
                    }
                    continue;
                }
                let x = self.configs.info(c).leaf.expect("running configuration");
                let trans = cache[x.0].get_or_insert_with(|| {
                    let factors = psdg.transition_factors(s, x);
                    digits
                        .iter()
                        .map(|d| factors.iter().zip(d).map(|(f, &v)| f[v]).product())
                        .collect()
                });
                for (m, &tr) in row.iter_mut().zip(trans.iter()) {
                    *m += a * tr;
                }
            }
        }

        let mut joint = vec![0.0; nt];
        for ci in 0..active.len() {
            for (j, m) in mass[ci * nt..(ci + 1) * nt].iter().enumerate() {
                joint[j] += m;
            }
        }
        let evidence: f64 = joint.iter().sum();
        if evidence.is_nan() || evidence <= 0.0 {
            return Err(InferenceError::ZeroEvidence { t: obs.t });
        }
        Ok(Explanation {
            t: obs.t,
            targets,
            active,
            mass,
            joint,
            evidence,
        })
    }

    /// Pushes each explained configuration forward: continuing frames keep
    /// their place, terminated ones hand over to fresh productions sampled at
    /// the observed state.
    pub fn predict(&mut self, explanation: &Explanation) -> Result<Prediction, InferenceError> {
        let psdg = self.psdg;
        let nt = explanation.targets.len();
        let prod_prob: Vec<Vec<f64>> = (0..psdg.productions().len())
            .map(|a| {
                explanation
                    .targets
                    .iter()
                    .map(|&q| psdg.production_probability_at(ProdId(a), q))
                    .collect()
            })
            .collect();
        let mut next: Vec<BTreeMap<ConfigId, f64>> = vec![BTreeMap::new(); nt];
        for (ci, &c) in explanation.active.iter().enumerate() {
            let edges = self.configs.successors(psdg, c)?.to_vec();
            let row = &explanation.mass[ci * nt..(ci + 1) * nt];
            for (j, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for e in &edges {
                    let w: f64 = e.fresh.iter().map(|a| prod_prob[a.0][j]).product();
                    if w > 0.0 {
                        *next[j].entry(e.target).or_default() += m * w;
                    }
                }
            }
        }
        Ok(Prediction {
            next: next.into_iter().map(|m| m.into_iter().collect()).collect(),
        })
    }

    /// Normalises the phases' joint tables into the belief for the next step.
    /// States whose posterior is zero leave the support.
    pub fn update(
        &self,
        belief: &BeliefState,
        explanation: &Explanation,
        prediction: &Prediction,
    ) -> BeliefState {
        let l = explanation.evidence;
        let mut out = BeliefState {
            time: belief.time + 1,
            support: Vec::new(),
            weights: Vec::new(),
            cond: Vec::new(),
            log_evidence: belief.log_evidence + l.ln(),
        };
        for (j, &q) in explanation.targets.iter().enumerate() {
            let z = explanation.joint[j];
            if z <= 0.0 {
                continue;
            }
            out.support.push(q);
            out.weights.push(z / l);
            out.cond.push(
                prediction.next[j]
                    .iter()
                    .map(|&(c, m)| (c, m / z))
                    .collect(),
            );
        }
        self.corrupt(&mut out);
        out
    }

    fn corrupt(&self, belief: &mut BeliefState) {
        if !self.options.corrupt_update {
            return;
        }
        if belief.weights.len() >= 2 {
            belief.weights[0] *= 1.05;
            let z: f64 = belief.weights.iter().sum();
            belief.weights.iter_mut().for_each(|w| *w /= z);
        } else if let Some(row) = belief.cond.iter_mut().find(|r| r.len() >= 2) {
            row[0].1 *= 1.05;
            let z: f64 = row.iter().map(|e| e.1).sum();
            row.iter_mut().for_each(|e| e.1 /= z);
        }
    }

    /// One full cycle for the observation of `Q^t`.
    pub fn step(
        &mut self,
        belief: &BeliefState,
        obs: &Observation,
    ) -> Result<(StepReport, BeliefState), InferenceError> {
        let explanation = self.explain(belief, obs)?;
        let prediction = self.predict(&explanation)?;
        let next = self.update(belief, &explanation, &prediction);
        let report = self.report(&explanation, &next);
        Ok((report, next))
    }

    fn report(&self, explanation: &Explanation, next: &BeliefState) -> StepReport {
        let l = explanation.evidence;
        let nt = explanation.targets.len();
        let explained = explanation.active.iter().enumerate().map(|(ci, &c)| {
            let total: f64 = explanation.mass[ci * nt..(ci + 1) * nt].iter().sum();
            (c, total / l)
        });
        let explain = StackDistribution::from_configs(&self.configs, explained);
        StepReport {
            t: explanation.t,
            evidence: l,
            log_evidence: next.log_evidence,
            states: next
                .support
                .iter()
                .copied()
                .zip(next.weights.iter().copied())
                .collect(),
            explain: Some(explain),
            predict: self.predicted(next),
            reinitialized: false,
        }
    }

    /// Distribution of the stack at `belief.time()` given the evidence so far.
    pub fn predicted(&self, belief: &BeliefState) -> StackDistribution {
        let mut merged: BTreeMap<ConfigId, f64> = BTreeMap::new();
        for (w, row) in belief.weights.iter().zip(&belief.cond) {
            for &(c, p) in row {
                *merged.entry(c).or_default() += w * p;
            }
        }
        StackDistribution::from_configs(&self.configs, merged.into_iter())
    }

    /// Report for a fresh start at `t` (time 0, or a reinitialisation).
    pub fn initial_report(
        &self,
        t: usize,
        evidence: f64,
        belief: &BeliefState,
        reinitialized: bool,
    ) -> StepReport {
        StepReport {
            t,
            evidence,
            log_evidence: belief.log_evidence,
            states: belief
                .support
                .iter()
                .copied()
                .zip(belief.weights.iter().copied())
                .collect(),
            explain: None,
            predict: self.predicted(belief),
            reinitialized,
        }
    }

    /// The per-level marginal tables of `belief`.
    pub fn tables(&self, belief: &BeliefState) -> BeliefTables {
        BeliefTables::from_belief(belief, |c| {
            let info = self.configs.info(c);
            let frames = info
                .frames
                .iter()
                .zip(&info.terminates)
                .map(|(f, &term)| (f.level, f.symbol, f.production, f.cursor, term))
                .collect();
            (info.leaf, frames)
        })
    }

    /// `Pr(Q^t = q_next | Q^(t-1) = q_prev, N^t_l = X, evidence)`; 0 when the
    /// conditioning event has no mass.
    pub fn symbol_transition(
        &self,
        belief: &BeliefState,
        level: usize,
        symbol: NontermId,
        q_prev: usize,
        q_next: usize,
    ) -> f64 {
        let Ok(i) = belief.support.binary_search(&q_prev) else {
            return 0.0;
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for &(c, p) in &belief.cond[i] {
            let info = self.configs.info(c);
            if info
                .frames
                .get(level - 1)
                .is_some_and(|f| f.symbol == symbol)
            {
                den += p;
                let x = info.leaf.expect("running configuration");
                num += p * self.psdg.transition_probability_at(q_prev, x, q_next);
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Name of the symbol under a frame's cursor, for diagnostics.
    pub fn describe(&self, c: ConfigId) -> String {
        let info = self.configs.info(c);
        if info.frames.is_empty() {
            return "completed".into();
        }
        info.frames
            .iter()
            .map(|f| {
                let p = self.psdg.production(f.production);
                format!(
                    "{}<{},{}>",
                    self.psdg.symbol_name(Symbol::Nonterminal(f.symbol)),
                    p.index,
                    f.cursor
                )
            })
            .collect::<Vec<_>>()
            .join(" / ")
    }
}
