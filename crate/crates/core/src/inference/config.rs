//! Interned stack configurations and their structural successors.
//!
//! A configuration is a whole root-to-leaf stack, or the absorbing
//! "completed" configuration once the root has finished. Successors are found
//! lazily, the first time a configuration carries belief mass.

use std::collections::HashMap;

use crate::generation::{
    expansion_terminates, plan_advance, AdvancePlan, ExpansionFrame, ExpansionStack,
};
use crate::grammar::{NontermId, ProdId, Psdg, Symbol, TermId};

use super::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigId(pub(crate) u32);

impl ConfigId {
    pub const COMPLETED: ConfigId = ConfigId(0);

    pub(crate) fn index(self) -> usize {
        self.0 as usize
    }
}

/// Move to `target`, freshly sampling `fresh` at the new state.
#[derive(Debug, Clone)]
pub(crate) struct Edge {
    pub target: ConfigId,
    pub fresh: Vec<ProdId>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConfigInfo {
    pub frames: Vec<ExpansionFrame>,
    pub leaf: Option<TermId>,
    /// `terminates[l - 1]` for level `l`.
    pub terminates: Vec<bool>,
    pub successors: Option<Vec<Edge>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConfigSpace {
    configs: Vec<ConfigInfo>,
    index: HashMap<Vec<ExpansionFrame>, ConfigId>,
    initial: Vec<Edge>,
    bound: usize,
}

/// Every top-down expansion of `symbol` starting at `level`.
fn fresh_chains(psdg: &Psdg, level: usize, symbol: NontermId) -> Vec<Vec<ExpansionFrame>> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    fn go(
        psdg: &Psdg,
        level: usize,
        symbol: NontermId,
        prefix: &mut Vec<ExpansionFrame>,
        out: &mut Vec<Vec<ExpansionFrame>>,
    ) {
        for &production in psdg.productions_of(symbol) {
            prefix.push(ExpansionFrame {
                level,
                symbol,
                production,
                cursor: 1,
            });
            match psdg.production(production).rhs[0] {
                Symbol::Terminal(_) => out.push(prefix.clone()),
                Symbol::Nonterminal(n) => go(psdg, level + 1, n, prefix, out),
            }
            prefix.pop();
        }
    }
    go(psdg, level, symbol, &mut prefix, &mut out);
    out
}

impl ConfigSpace {
    pub fn new(psdg: &Psdg, bound: usize) -> Result<Self, InferenceError> {
        let mut space = ConfigSpace {
            configs: vec![ConfigInfo {
                frames: Vec::new(),
                leaf: None,
                terminates: Vec::new(),
                successors: Some(vec![Edge {
                    target: ConfigId::COMPLETED,
                    fresh: Vec::new(),
                }]),
            }],
            index: HashMap::new(),
            initial: Vec::new(),
            bound,
        };
        let mut initial = Vec::new();
        for chain in fresh_chains(psdg, 1, psdg.start()) {
            let fresh = chain.iter().map(|f| f.production).collect();
            initial.push(Edge {
                target: space.intern(psdg, chain)?,
                fresh,
            });
        }
        space.initial = initial;
        Ok(space)
    }

    fn intern(
        &mut self,
        psdg: &Psdg,
        frames: Vec<ExpansionFrame>,
    ) -> Result<ConfigId, InferenceError> {
        if let Some(&id) = self.index.get(&frames) {
            return Ok(id);
        }
        if self.configs.len() >= self.bound {
            return Err(InferenceError::TooManyConfigurations { bound: self.bound });
        }
        let stack = ExpansionStack::from_frames_unchecked(frames.clone());
        let id = ConfigId(self.configs.len() as u32);
        self.configs.push(ConfigInfo {
            leaf: Some(stack.leaf_terminal(psdg)),
            terminates: (1..=frames.len())
                .map(|l| expansion_terminates(psdg, &stack, l))
                .collect(),
            frames: frames.clone(),
            successors: None,
        });
        self.index.insert(frames, id);
        Ok(id)
    }

    pub fn initial(&self) -> &[Edge] {
        &self.initial
    }

    pub fn info(&self, id: ConfigId) -> &ConfigInfo {
        &self.configs[id.index()]
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    /// Successor edges of `id`, computing them on first use.
    pub fn successors(&mut self, psdg: &Psdg, id: ConfigId) -> Result<&[Edge], InferenceError> {
        if self.configs[id.index()].successors.is_none() {
            let stack =
                ExpansionStack::from_frames_unchecked(self.configs[id.index()].frames.clone());
            let edges = match plan_advance(psdg, &stack) {
                AdvancePlan::Completed => vec![Edge {
                    target: ConfigId::COMPLETED,
                    fresh: Vec::new(),
                }],
                AdvancePlan::Continue { kept, expand: None } => vec![Edge {
                    target: self.intern(psdg, kept)?,
                    fresh: Vec::new(),
                }],
                AdvancePlan::Continue {
                    kept,
                    expand: Some((level, symbol)),
                } => {
                    let mut edges = Vec::new();
                    for chain in fresh_chains(psdg, level, symbol) {
                        let fresh = chain.iter().map(|f| f.production).collect();
                        let mut frames = kept.clone();
                        frames.extend(chain);
                        edges.push(Edge {
                            target: self.intern(psdg, frames)?,
                            fresh,
                        });
                    }
                    edges
                }
            };
            self.configs[id.index()].successors = Some(edges);
        }
        Ok(self.configs[id.index()]
            .successors
            .as_deref()
            .expect("filled above"))
    }
}
