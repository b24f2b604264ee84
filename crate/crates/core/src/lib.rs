//! Probabilistic state-dependent grammars: definition, sampling, exact
//! online explanation/prediction, and brute-force verification tools.

pub mod generation;
pub mod grammar;
pub mod inference;
pub mod oracle;
pub mod synth;

pub use grammar::{
    Diagnostic, DiagnosticKind, GrammarError, NontermId, ProdId, Production, Psdg, StatePoint,
    StateSet, StateSpace, Symbol, TermId, ValidateOptions, TRAFFIC_PSDG,
};
