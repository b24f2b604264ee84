//! Expansion stacks and the structural part of advancing them.

use super::GenerationError;
use crate::grammar::{NontermId, ProdId, Psdg, Symbol, TermId};

/// One active expansion: nonterminal `symbol` at `level`, expanded by
/// `production`, currently working on rhs position `cursor` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExpansionFrame {
    pub level: usize,
    pub symbol: NontermId,
    pub production: ProdId,
    pub cursor: usize,
}

impl ExpansionFrame {
    /// Symbol under the cursor.
    pub fn current(&self, psdg: &Psdg) -> Symbol {
        psdg.production(self.production).rhs[self.cursor - 1]
    }
}

/// Root-to-leaf path of active expansions. The leaf frame's cursor rests on a
/// terminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExpansionStack {
    frames: Vec<ExpansionFrame>,
}

impl ExpansionStack {
    /// Builds a stack after checking the structural invariants.
    pub fn new(psdg: &Psdg, frames: Vec<ExpansionFrame>) -> Result<Self, GenerationError> {
        let stack = ExpansionStack { frames };
        stack.check(psdg)?;
        Ok(stack)
    }

    pub(crate) fn from_frames_unchecked(frames: Vec<ExpansionFrame>) -> Self {
        ExpansionStack { frames }
    }

    pub fn frames(&self) -> &[ExpansionFrame] {
        &self.frames
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Terminal emitted at this time step.
    pub fn leaf_terminal(&self, psdg: &Psdg) -> TermId {
        let leaf = self.frames.last().expect("stacks are never empty");
        leaf.current(psdg)
            .as_terminal()
            .expect("leaf cursor rests on a terminal")
    }

    fn check(&self, psdg: &Psdg) -> Result<(), GenerationError> {
        let bad = |msg: String| Err(GenerationError::InvalidTrajectory(msg));
        if self.frames.is_empty() {
            return bad("empty stack".into());
        }
        if self.frames[0].symbol != psdg.start() {
            return bad("root frame does not expand the start symbol".into());
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.production.0 >= psdg.productions().len() {
                return bad(format!("frame {} names an unknown production", i + 1));
            }
            let p = psdg.production(f.production);
            if f.level != i + 1 {
                return bad(format!("frame {} has level {}", i + 1, f.level));
            }
            if p.lhs != f.symbol {
                return bad(format!(
                    "frame {} expands {} with a production of {}",
                    i + 1,
                    psdg.symbol_name(Symbol::Nonterminal(f.symbol)),
                    psdg.nonterminals()[p.lhs.0]
                ));
            }
            if f.cursor == 0 || f.cursor > p.effective_len() {
                return bad(format!("frame {} cursor {} out of range", i + 1, f.cursor));
            }
            let current = p.rhs[f.cursor - 1];
            match (current, self.frames.get(i + 1)) {
                (Symbol::Terminal(_), None) => {}
                (Symbol::Nonterminal(n), Some(child)) if child.symbol == n => {}
                _ => {
                    return bad(format!(
                        "frame {} is inconsistent with the frame below it",
                        i + 1
                    ))
                }
            }
        }
        Ok(())
    }
}

/// True iff the expansion at `level` (1-based) ends with this step: its cursor
/// and the cursors of every frame below sit on their production's final symbol.
/// A frame whose production recurses in tail position never terminates.
pub fn expansion_terminates(psdg: &Psdg, stack: &ExpansionStack, level: usize) -> bool {
    stack.frames[level - 1..].iter().all(|f| {
        let p = psdg.production(f.production);
        !p.tail_recursive && f.cursor == p.rhs.len()
    })
}

/// Deterministic part of moving from one time step to the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvancePlan {
    /// The root expansion finished; nothing follows.
    Completed,
    /// Keep `kept` (with the deepest kept cursor already moved), then expand
    /// `expand = (level, symbol)` freshly if present.
    Continue {
        kept: Vec<ExpansionFrame>,
        expand: Option<(usize, NontermId)>,
    },
}

/// Computes which frames survive the step after `stack` and where fresh
/// expansion starts. Frames are scanned from the leaf up: a finished child lets
/// its parent move to the next rhs symbol, re-enter a tail-recursive lhs at the
/// same level, or finish in turn.
pub fn plan_advance(psdg: &Psdg, stack: &ExpansionStack) -> AdvancePlan {
    for i in (0..stack.frames.len()).rev() {
        let f = stack.frames[i];
        let p = psdg.production(f.production);
        if f.cursor < p.effective_len() {
            let mut kept = stack.frames[..=i].to_vec();
            kept[i].cursor += 1;
            let expand = p.rhs[f.cursor].as_nonterminal().map(|n| (f.level + 1, n));
            return AdvancePlan::Continue { kept, expand };
        }
        if p.tail_recursive {
            return AdvancePlan::Continue {
                kept: stack.frames[..i].to_vec(),
                expand: Some((f.level, p.lhs)),
            };
        }
    }
    AdvancePlan::Completed
}
