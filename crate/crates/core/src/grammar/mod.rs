//! Grammar definition: symbols, productions with state-dependent probabilities,
//! and the factored state model (per-feature priors and transition CPTs).
//!
//! A [`Psdg`] is only ever produced by [`Psdg::parse`] / [`validate`], so every
//! value of this type satisfies the normalisation and recursion constraints.

mod diagnostics;
mod parse;
mod state;
mod validate;

use std::fmt;

pub use diagnostics::{Diagnostic, DiagnosticKind, GrammarError};
pub use parse::{parse_raw, RawGrammar};
pub use state::{StatePoint, StateSet, StateSetIter, StateSpace};
pub use validate::{validate, ValidateOptions};

/// Default cap on explicit state enumeration.
pub const DEFAULT_STATE_BOUND: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NontermId(pub usize);

/// Position of a production in [`Psdg::productions`] (sorted by declared index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProdId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Terminal(TermId),
    Nonterminal(NontermId),
}

impl Symbol {
    pub fn as_nonterminal(self) -> Option<NontermId> {
        match self {
            Symbol::Nonterminal(n) => Some(n),
            Symbol::Terminal(_) => None,
        }
    }

    pub fn as_terminal(self) -> Option<TermId> {
        match self {
            Symbol::Terminal(t) => Some(t),
            Symbol::Nonterminal(_) => None,
        }
    }
}

/// One row of a transition CPT. `None` entries are wildcards.
#[derive(Debug, Clone, PartialEq)]
pub struct CptRow {
    pub parent_values: Vec<Option<usize>>,
    pub terminal: Option<TermId>,
    pub probs: Vec<f64>,
}

impl CptRow {
    fn matches(&self, parent_values: &[usize], terminal: TermId) -> bool {
        self.terminal.is_none_or(|t| t == terminal)
            && self
                .parent_values
                .iter()
                .zip(parent_values)
                .all(|(want, &got)| want.is_none_or(|w| w == got))
    }
}

#[derive(Debug, Clone)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
    pub prior: Vec<f64>,
    pub parents: Vec<usize>,
    pub cpt: Vec<CptRow>,
    // dense lookup: (parent combination, terminal) -> row in `cpt`
    table: Vec<usize>,
    parent_radices: Vec<usize>,
}

impl Feature {
    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }

    fn combo_index(&self, parent_values: impl Iterator<Item = usize>) -> usize {
        parent_values
            .zip(&self.parent_radices)
            .fold(0, |acc, (v, r)| acc * r + v)
    }

    /// Distribution over this feature's next value.
    pub fn next_distribution(
        &self,
        prev: &StatePoint,
        terminal: TermId,
        num_terminals: usize,
    ) -> &[f64] {
        let combo = self.combo_index(self.parents.iter().map(|&p| prev.value(p)));
        &self.cpt[self.table[combo * num_terminals + terminal.0]].probs
    }

    fn next_distribution_indexed(
        &self,
        space: &StateSpace,
        prev: usize,
        terminal: TermId,
        num_terminals: usize,
    ) -> &[f64] {
        let combo = self.combo_index(self.parents.iter().map(|&p| space.digit(prev, p)));
        &self.cpt[self.table[combo * num_terminals + terminal.0]].probs
    }
}

/// A conjunction of per-feature value-subset constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub constraints: Vec<(usize, Vec<bool>)>,
}

impl Guard {
    pub fn matches(&self, state: &StatePoint) -> bool {
        self.constraints
            .iter()
            .all(|(f, mask)| mask[state.value(*f)])
    }

    fn matches_indexed(&self, space: &StateSpace, state: usize) -> bool {
        self.constraints
            .iter()
            .all(|(f, mask)| mask[space.digit(state, *f)])
    }
}

/// Ordered guard table with a default; the first matching rule wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityFunction {
    pub rules: Vec<(Guard, f64)>,
    pub default: f64,
}

impl ProbabilityFunction {
    pub fn constant(p: f64) -> Self {
        ProbabilityFunction {
            rules: Vec::new(),
            default: p,
        }
    }

    pub fn eval(&self, state: &StatePoint) -> f64 {
        self.rules
            .iter()
            .find(|(g, _)| g.matches(state))
            .map_or(self.default, |(_, p)| *p)
    }

    pub fn eval_indexed(&self, space: &StateSpace, state: usize) -> f64 {
        self.rules
            .iter()
            .find(|(g, _)| g.matches_indexed(space, state))
            .map_or(self.default, |(_, p)| *p)
    }

    /// Features referenced by any guard, sorted and deduplicated.
    pub fn scope(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .rules
            .iter()
            .flat_map(|(g, _)| g.constraints.iter().map(|(f, _)| *f))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone)]
pub struct Production {
    /// Declared index from the grammar file.
    pub index: u32,
    pub lhs: NontermId,
    pub rhs: Vec<Symbol>,
    pub probability: ProbabilityFunction,
    /// Final rhs symbol equals the lhs.
    pub tail_recursive: bool,
}

impl Production {
    /// Number of rhs positions a cursor can rest on. A trailing tail-recursive
    /// symbol re-enters the same level instead of becoming a cursor position.
    pub fn effective_len(&self) -> usize {
        self.rhs.len() - usize::from(self.tail_recursive)
    }
}

/// A validated probabilistic state-dependent grammar.
#[derive(Debug, Clone)]
pub struct Psdg {
    pub(crate) features: Vec<Feature>,
    pub(crate) terminals: Vec<String>,
    pub(crate) nonterminals: Vec<String>,
    pub(crate) start: NontermId,
    pub(crate) productions: Vec<Production>,
    pub(crate) by_lhs: Vec<Vec<ProdId>>,
    pub(crate) space: StateSpace,
    pub(crate) levels: Vec<Vec<usize>>,
    pub(crate) depth: usize,
    pub(crate) max_len: usize,
}

impl Psdg {
    /// Parses and validates grammar text with default options.
    pub fn parse(text: &str) -> Result<Psdg, GrammarError> {
        Self::parse_with(text, &ValidateOptions::default())
    }

    pub fn parse_with(text: &str, options: &ValidateOptions) -> Result<Psdg, GrammarError> {
        let raw = parse_raw(text).map_err(|d| GrammarError::Invalid(vec![d]))?;
        validate(&raw, options).map_err(GrammarError::Invalid)
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn terminal(&self, name: &str) -> Option<TermId> {
        self.terminals.iter().position(|t| t == name).map(TermId)
    }

    pub fn nonterminal(&self, name: &str) -> Option<NontermId> {
        self.nonterminals
            .iter()
            .position(|t| t == name)
            .map(NontermId)
    }

    pub fn start(&self) -> NontermId {
        self.start
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn production(&self, id: ProdId) -> &Production {
        &self.productions[id.0]
    }

    /// Looks a production up by its declared index.
    pub fn production_by_index(&self, index: u32) -> Option<ProdId> {
        self.productions
            .binary_search_by_key(&index, |p| p.index)
            .ok()
            .map(ProdId)
    }

    pub fn productions_of(&self, lhs: NontermId) -> &[ProdId] {
        &self.by_lhs[lhs.0]
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Maximum hierarchy depth `d` (number of levels reachable from the start symbol).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Maximum production length `m`.
    pub fn max_production_len(&self) -> usize {
        self.max_len
    }

    /// Levels (1-based) at which a nonterminal can appear; empty if unreachable.
    pub fn levels_of(&self, n: NontermId) -> &[usize] {
        &self.levels[n.0]
    }

    pub fn symbol_name(&self, s: Symbol) -> &str {
        match s {
            Symbol::Terminal(t) => &self.terminals[t.0],
            Symbol::Nonterminal(n) => &self.nonterminals[n.0],
        }
    }

    pub fn production_probability(&self, prod: ProdId, state: &StatePoint) -> f64 {
        self.productions[prod.0].probability.eval(state)
    }

    pub fn production_probability_at(&self, prod: ProdId, state: usize) -> f64 {
        self.productions[prod.0]
            .probability
            .eval_indexed(&self.space, state)
    }

    /// `pi1(prev, terminal, next)` as the product of per-feature CPT entries.
    pub fn transition_probability(
        &self,
        prev: &StatePoint,
        terminal: TermId,
        next: &StatePoint,
    ) -> f64 {
        let nt = self.terminals.len();
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| f.next_distribution(prev, terminal, nt)[next.value(i)])
            .product()
    }

    /// Per-feature next-value distributions for `(prev, terminal)`.
    pub fn transition_factors(&self, prev: usize, terminal: TermId) -> Vec<&[f64]> {
        let nt = self.terminals.len();
        self.features
            .iter()
            .map(|f| f.next_distribution_indexed(&self.space, prev, terminal, nt))
            .collect()
    }

    pub fn transition_probability_at(&self, prev: usize, terminal: TermId, next: usize) -> f64 {
        let nt = self.terminals.len();
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.next_distribution_indexed(&self.space, prev, terminal, nt)
                    [self.space.digit(next, i)]
            })
            .product()
    }

    /// `pi0(state)`, the product of per-feature priors.
    pub fn prior_probability(&self, state: &StatePoint) -> f64 {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| f.prior[state.value(i)])
            .product()
    }

    pub fn prior_probability_at(&self, state: usize) -> f64 {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| f.prior[self.space.digit(state, i)])
            .product()
    }

    /// Members of a product-form set in lexicographic order.
    pub fn enumerate_states(
        &self,
        constraint: &StateSet,
        bound: usize,
    ) -> Result<Vec<StatePoint>, GrammarError> {
        let size = constraint.len();
        if size > bound as u128 {
            return Err(GrammarError::SetTooLarge { size, bound });
        }
        Ok(constraint.iter().collect())
    }

    pub fn full_set(&self) -> StateSet {
        StateSet::full(&self.space)
    }

    /// Parses `feature=value` pairs into a state point; unknown names yield `None`.
    pub fn state_from_labels<'a>(
        &self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Option<StatePoint> {
        let mut values = vec![None; self.features.len()];
        for (f, v) in pairs {
            let fi = self.feature_index(f)?;
            values[fi] = Some(self.features[fi].value_index(v)?);
        }
        values
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .map(StatePoint)
    }

    /// `feature=value,...` label of a state.
    pub fn state_label(&self, state: &StatePoint) -> String {
        self.features
            .iter()
            .zip(state.values())
            .map(|(f, &v)| format!("{}={}", f.name, f.values[v]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn production_label(&self, prod: ProdId) -> String {
        let p = &self.productions[prod.0];
        let rhs: Vec<&str> = p.rhs.iter().map(|&s| self.symbol_name(s)).collect();
        format!(
            "{}: {} -> {}",
            p.index,
            self.nonterminals[p.lhs.0],
            rhs.join(" ")
        )
    }
}

impl fmt::Display for Psdg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|N|={} |Σ|={} |P|={} d={} m={} |Q|={}",
            self.nonterminals.len(),
            self.terminals.len(),
            self.productions.len(),
            self.depth,
            self.max_len,
            self.space.size()
        )
    }
}

pub(crate) fn build_feature(
    name: String,
    values: Vec<String>,
    prior: Vec<f64>,
    parents: Vec<usize>,
    cpt: Vec<CptRow>,
    parent_radices: Vec<usize>,
    num_terminals: usize,
) -> Result<Feature, Vec<usize>> {
    // Fill the dense table; collect uncovered parent combinations on failure.
    let combos: usize = parent_radices.iter().product();
    let mut table = Vec::with_capacity(combos * num_terminals);
    let mut missing = Vec::new();
    let mut digits = vec![0usize; parent_radices.len()];
    for combo in 0..combos {
        let mut rem = combo;
        for i in (0..parent_radices.len()).rev() {
            digits[i] = rem % parent_radices[i];
            rem /= parent_radices[i];
        }
        for t in 0..num_terminals {
            match cpt.iter().position(|r| r.matches(&digits, TermId(t))) {
                Some(row) => table.push(row),
                None => {
                    missing.push(combo * num_terminals + t);
                    table.push(0);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(missing);
    }
    Ok(Feature {
        name,
        values,
        prior,
        parents,
        cpt,
        table,
        parent_radices,
    })
}

/// Bundled simplified traffic grammar (seven productions, implementer-chosen tables).
pub const TRAFFIC_PSDG: &str = include_str!("../../grammars/traffic.psdg");
