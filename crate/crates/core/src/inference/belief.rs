//! Belief state and its per-level marginal tables.

use std::collections::BTreeMap;

use crate::grammar::{NontermId, ProdId, Psdg, StatePoint, TermId};

use super::config::ConfigId;

/// Exact filtering state before observing `Q^(time-1)`'s successor: for each
/// live state `q` of `Q^(time-1)` its posterior weight and the conditional
/// distribution of the stack active at `time`.
#[derive(Debug, Clone)]
pub struct BeliefState {
    pub(crate) time: usize,
    pub(crate) support: Vec<usize>,
    pub(crate) weights: Vec<f64>,
    /// Per support state, sorted by configuration.
    pub(crate) cond: Vec<Vec<(ConfigId, f64)>>,
    pub(crate) log_evidence: f64,
}

impl BeliefState {
    /// Time step of the stack this belief describes.
    pub fn time(&self) -> usize {
        self.time
    }

    /// Indices of the live states of `Q^(time-1)`, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `Pr(Q^(time-1) = q | evidence)` for each support state.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cumulative natural-log probability of all evidence so far.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// Stored probabilities: one weight per live state plus one entry per
    /// (state, configuration) pair with positive mass.
    pub fn entry_count(&self) -> usize {
        self.support.len() + self.cond.iter().map(Vec::len).sum::<usize>()
    }

    pub fn state_distribution(&self, psdg: &Psdg) -> Vec<(StatePoint, f64)> {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| (psdg.space().point(s), w))
            .collect()
    }

    fn position(&self, state: usize) -> Option<usize> {
        self.support.binary_search(&state).ok()
    }
}

/// Per-state marginals of a [`BeliefState`]: `B_Q(q)`, `B_N(l, X, q)`,
/// `B_P(l, <a,b>, q)`, `B_Sigma(x, q)`, `B_T(l, q)`, `B_TN(l, X, q)` and the
/// completed mass. Rows other than `B_Q` are conditioned on the state.
#[derive(Debug, Clone)]
pub struct BeliefTables {
    pub(crate) support: Vec<usize>,
    pub(crate) b_q: Vec<f64>,
    pub(crate) b_n: Vec<BTreeMap<(usize, NontermId), f64>>,
    pub(crate) b_p: Vec<BTreeMap<(usize, ProdId, usize), f64>>,
    pub(crate) b_sigma: Vec<BTreeMap<TermId, f64>>,
    pub(crate) b_t: Vec<BTreeMap<usize, f64>>,
    pub(crate) b_tn: Vec<BTreeMap<(usize, NontermId), f64>>,
    pub(crate) completed: Vec<f64>,
}

impl BeliefTables {
    pub(crate) fn from_belief(
        belief: &BeliefState,
        frames_of: impl Fn(ConfigId) -> (Option<TermId>, Vec<(usize, NontermId, ProdId, usize, bool)>),
    ) -> Self {
        let n = belief.support.len();
        let mut t = BeliefTables {
            support: belief.support.clone(),
            b_q: belief.weights.clone(),
            b_n: vec![BTreeMap::new(); n],
            b_p: vec![BTreeMap::new(); n],
            b_sigma: vec![BTreeMap::new(); n],
            b_t: vec![BTreeMap::new(); n],
            b_tn: vec![BTreeMap::new(); n],
            completed: vec![0.0; n],
        };
        for (i, row) in belief.cond.iter().enumerate() {
            let mut terminated: BTreeMap<(usize, NontermId), f64> = BTreeMap::new();
            for &(c, p) in row {
                if c == ConfigId::COMPLETED {
                    t.completed[i] += p;
                    continue;
                }
                let (leaf, frames) = frames_of(c);
                *t.b_sigma[i]
                    .entry(leaf.expect("running configurations have a leaf"))
                    .or_default() += p;
                for (level, symbol, prod, cursor, term) in frames {
                    *t.b_n[i].entry((level, symbol)).or_default() += p;
                    *t.b_p[i].entry((level, prod, cursor)).or_default() += p;
                    if term {
                        *t.b_t[i].entry(level).or_default() += p;
                        *terminated.entry((level, symbol)).or_default() += p;
                    }
                }
            }
            for (key, &bn) in &t.b_n[i] {
                let num = terminated.get(key).copied().unwrap_or(0.0);
                t.b_tn[i].insert(*key, num / bn);
            }
        }
        t
    }

    fn pos(&self, q: usize) -> Option<usize> {
        self.support.binary_search(&q).ok()
    }

    /// Live state indices.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn b_q(&self, q: usize) -> f64 {
        self.pos(q).map_or(0.0, |i| self.b_q[i])
    }

    pub fn b_n(&self, level: usize, symbol: NontermId, q: usize) -> f64 {
        self.pos(q)
            .and_then(|i| self.b_n[i].get(&(level, symbol)).copied())
            .unwrap_or(0.0)
    }

    pub fn b_p(&self, level: usize, production: ProdId, cursor: usize, q: usize) -> f64 {
        self.pos(q)
            .and_then(|i| self.b_p[i].get(&(level, production, cursor)).copied())
            .unwrap_or(0.0)
    }

    pub fn b_sigma(&self, terminal: TermId, q: usize) -> f64 {
        self.pos(q)
            .and_then(|i| self.b_sigma[i].get(&terminal).copied())
            .unwrap_or(0.0)
    }

    pub fn b_t(&self, level: usize, q: usize) -> f64 {
        self.pos(q)
            .and_then(|i| self.b_t[i].get(&level).copied())
            .unwrap_or(0.0)
    }

    /// `None` where `B_N(l, X, q) = 0`.
    pub fn b_tn(&self, level: usize, symbol: NontermId, q: usize) -> Option<f64> {
        self.pos(q)
            .and_then(|i| self.b_tn[i].get(&(level, symbol)).copied())
    }

    pub fn completed(&self, q: usize) -> f64 {
        self.pos(q).map_or(0.0, |i| self.completed[i])
    }

    /// Symbols stored at `level` for state `q`.
    pub fn symbols_at(&self, level: usize, q: usize) -> Vec<(NontermId, f64)> {
        self.pos(q)
            .map(|i| {
                self.b_n[i]
                    .iter()
                    .filter(|((l, _), _)| *l == level)
                    .map(|((_, x), p)| (*x, *p))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Productions (with cursors) stored at `level` for state `q`.
    pub fn productions_at(&self, level: usize, q: usize) -> Vec<((ProdId, usize), f64)> {
        self.pos(q)
            .map(|i| {
                self.b_p[i]
                    .iter()
                    .filter(|((l, _, _), _)| *l == level)
                    .map(|((_, a, b), p)| ((*a, *b), *p))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Number of populated table entries.
    pub fn entry_count(&self) -> usize {
        self.b_q.len()
            + [&self.b_n, &self.b_tn]
                .iter()
                .map(|t| t.iter().map(BTreeMap::len).sum::<usize>())
                .sum::<usize>()
            + self.b_p.iter().map(BTreeMap::len).sum::<usize>()
            + self.b_sigma.iter().map(BTreeMap::len).sum::<usize>()
            + self.b_t.iter().map(BTreeMap::len).sum::<usize>()
            + self.completed.iter().filter(|&&c| c > 0.0).count()
    }

    /// `B_P(l, rho, q) / B_N(l, X, q)` when rho expands `X`, else 0.
    pub fn conditional_production_given_symbol(
        &self,
        psdg: &Psdg,
        level: usize,
        production: ProdId,
        cursor: usize,
        symbol: NontermId,
        q: usize,
    ) -> Result<f64, super::InferenceError> {
        let bn = self.b_n(level, symbol, q);
        if bn <= 0.0 {
            return Err(super::InferenceError::UndefinedConditional);
        }
        if psdg.production(production).lhs != symbol {
            return Ok(0.0);
        }
        Ok(self.b_p(level, production, cursor, q) / bn)
    }
}

impl BeliefState {
    /// Whether `state` is in the support.
    pub fn contains(&self, state: usize) -> bool {
        self.position(state).is_some()
    }
}
