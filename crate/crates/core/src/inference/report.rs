//! Per-step reports: explanation and prediction distributions over stacks.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use crate::generation::ExpansionFrame;
use crate::grammar::{NontermId, ProdId, Psdg, Symbol, TermId};

use super::config::{ConfigId, ConfigSpace};

/// Marginals of one level of a stack distribution. Mass of stacks shallower
/// than the level (or completed) is absent, so rows may sum to less than 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelDistribution {
    pub symbols: BTreeMap<NontermId, f64>,
    /// Keyed by (production, cursor).
    pub productions: BTreeMap<(ProdId, usize), f64>,
    /// Probability that the expansion at this level ends with this step.
    pub terminates: f64,
}

/// Marginals of a distribution over whole stacks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StackDistribution {
    /// Mass on the root expansion having already finished.
    pub completed: f64,
    pub terminals: BTreeMap<TermId, f64>,
    /// `levels[l - 1]` is level `l`.
    pub levels: Vec<LevelDistribution>,
}

impl StackDistribution {
    pub(crate) fn from_configs(
        configs: &ConfigSpace,
        dist: impl Iterator<Item = (ConfigId, f64)>,
    ) -> Self {
        let mut out = StackDistribution::default();
        for (c, p) in dist {
            if c == ConfigId::COMPLETED {
                out.add(None, std::iter::empty(), p);
            } else {
                let info = configs.info(c);
                out.add(
                    info.leaf,
                    info.frames.iter().zip(info.terminates.iter().copied()),
                    p,
                );
            }
        }
        out
    }

    /// Adds mass `p` on one stack, given its leaf terminal and each frame with
    /// its termination flag. A missing leaf means the completed stack.
    pub fn add<'a>(
        &mut self,
        leaf: Option<TermId>,
        frames: impl Iterator<Item = (&'a ExpansionFrame, bool)>,
        p: f64,
    ) {
        if p == 0.0 {
            return;
        }
        let Some(leaf) = leaf else {
            self.completed += p;
            return;
        };
        *self.terminals.entry(leaf).or_default() += p;
        for (f, term) in frames {
            if self.levels.len() < f.level {
                self.levels.resize_with(f.level, LevelDistribution::default);
            }
            let lvl = &mut self.levels[f.level - 1];
            *lvl.symbols.entry(f.symbol).or_default() += p;
            *lvl.productions.entry((f.production, f.cursor)).or_default() += p;
            if term {
                lvl.terminates += p;
            }
        }
    }

    /// Probability of `symbol` at `level`.
    pub fn symbol(&self, level: usize, symbol: NontermId) -> f64 {
        self.levels
            .get(level - 1)
            .and_then(|l| l.symbols.get(&symbol).copied())
            .unwrap_or(0.0)
    }

    /// Probability of production `<a, b>` at `level`.
    pub fn production(&self, level: usize, production: ProdId, cursor: usize) -> f64 {
        self.levels
            .get(level - 1)
            .and_then(|l| l.productions.get(&(production, cursor)).copied())
            .unwrap_or(0.0)
    }

    /// Total probability of `production` at `level`, any cursor.
    pub fn production_any_cursor(&self, level: usize, production: ProdId) -> f64 {
        self.levels
            .get(level - 1)
            .map(|l| {
                l.productions
                    .iter()
                    .filter(|((a, _), _)| *a == production)
                    .map(|(_, p)| p)
                    .sum()
            })
            .unwrap_or(0.0)
    }

    pub fn terminal(&self, terminal: TermId) -> f64 {
        self.terminals.get(&terminal).copied().unwrap_or(0.0)
    }

    pub fn terminates(&self, level: usize) -> f64 {
        self.levels.get(level - 1).map_or(0.0, |l| l.terminates)
    }

    /// Largest absolute difference over every reported entry.
    pub fn max_abs_diff(&self, other: &StackDistribution) -> f64 {
        let mut d = (self.completed - other.completed).abs();
        d = d.max(map_diff(&self.terminals, &other.terminals));
        let empty = LevelDistribution::default();
        for l in 0..self.levels.len().max(other.levels.len()) {
            let a = self.levels.get(l).unwrap_or(&empty);
            let b = other.levels.get(l).unwrap_or(&empty);
            d = d
                .max(map_diff(&a.symbols, &b.symbols))
                .max(map_diff(&a.productions, &b.productions))
                .max((a.terminates - b.terminates).abs());
        }
        d
    }

    pub fn to_json(&self, psdg: &Psdg) -> Value {
        let terminals: Map<String, Value> = self
            .terminals
            .iter()
            .map(|(t, p)| (psdg.terminals()[t.0].clone(), json!(p)))
            .collect();
        let levels: Vec<Value> = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let symbols: Map<String, Value> = l
                    .symbols
                    .iter()
                    .map(|(x, p)| (psdg.symbol_name(Symbol::Nonterminal(*x)).to_string(), json!(p)))
                    .collect();
                let productions: Map<String, Value> = l
                    .productions
                    .iter()
                    .map(|((a, b), p)| (format!("{},{}", psdg.production(*a).index, b), json!(p)))
                    .collect();
                json!({ "level": i + 1, "symbols": symbols, "productions": productions, "terminates": l.terminates })
            })
            .collect();
        json!({ "completed": self.completed, "terminal": terminals, "levels": levels })
    }
}

fn map_diff<K: Ord + Copy>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let keys: BTreeSet<K> = a.keys().chain(b.keys()).copied().collect();
    keys.into_iter()
        .map(|k| (a.get(&k).copied().unwrap_or(0.0) - b.get(&k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Everything reported after observing `Q^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: usize,
    /// `Pr(Q^t in R^t | earlier evidence)`.
    pub evidence: f64,
    /// Natural log of the probability of all evidence through `t`.
    pub log_evidence: f64,
    /// Posterior of `Q^t` as (state index, probability), ascending by state.
    pub states: Vec<(usize, f64)>,
    /// The stack active at `t`; absent for `t = 0` and after a restart.
    pub explain: Option<StackDistribution>,
    /// The stack active at `t + 1`.
    pub predict: StackDistribution,
    /// The belief was restarted from the prior after zero evidence.
    pub reinitialized: bool,
}

/// Worst disagreement between two reports of the same step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Deviation {
    pub state: f64,
    pub explain: f64,
    pub predict: f64,
    /// Relative difference of the step evidence.
    pub evidence: f64,
}

impl Deviation {
    pub fn max(&self) -> f64 {
        self.state
            .max(self.explain)
            .max(self.predict)
            .max(self.evidence)
    }
}

impl StepReport {
    pub fn state_probability(&self, state: usize) -> f64 {
        self.states
            .binary_search_by_key(&state, |e| e.0)
            .map_or(0.0, |i| self.states[i].1)
    }

    /// Posterior marginal of each feature's value.
    pub fn feature_marginals(&self, psdg: &Psdg) -> Vec<Vec<f64>> {
        let space = psdg.space();
        let mut out: Vec<Vec<f64>> = psdg
            .features()
            .iter()
            .map(|f| vec![0.0; f.values.len()])
            .collect();
        for &(q, p) in &self.states {
            for (f, row) in out.iter_mut().enumerate() {
                row[space.digit(q, f)] += p;
            }
        }
        out
    }

    pub fn deviation(&self, other: &StepReport) -> Deviation {
        let a: BTreeMap<usize, f64> = self.states.iter().copied().collect();
        let b: BTreeMap<usize, f64> = other.states.iter().copied().collect();
        let explain = match (&self.explain, &other.explain) {
            (Some(x), Some(y)) => x.max_abs_diff(y),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let scale = self
            .evidence
            .abs()
            .max(other.evidence.abs())
            .max(f64::MIN_POSITIVE);
        Deviation {
            state: map_diff(&a, &b),
            explain,
            predict: self.predict.max_abs_diff(&other.predict),
            evidence: (self.evidence - other.evidence).abs() / scale,
        }
    }

    pub fn to_json(&self, psdg: &Psdg) -> Value {
        let space = psdg.space();
        let state: Map<String, Value> = self
            .states
            .iter()
            .map(|&(q, p)| (psdg.state_label(&space.point(q)), json!(p)))
            .collect();
        let features: Map<String, Value> = psdg
            .features()
            .iter()
            .zip(self.feature_marginals(psdg))
            .map(|(f, row)| {
                let m: Map<String, Value> = f
                    .values
                    .iter()
                    .cloned()
                    .zip(row.into_iter().map(|p| json!(p)))
                    .collect();
                (f.name.clone(), Value::Object(m))
            })
            .collect();
        json!({
            "t": self.t,
            "evidence": self.evidence,
            "log_evidence": self.log_evidence,
            "reinitialized": self.reinitialized,
            "state": state,
            "features": features,
            "explain": self.explain.as_ref().map(|e| e.to_json(psdg)),
            "predict": self.predict.to_json(psdg),
        })
    }
}
