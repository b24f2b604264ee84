//! Ground truth for small grammars: exhaustive enumeration of executions,
//! exact posteriors by filtering, and the state-annotated PCFG equivalent.

mod joint;
mod pcfg;

use thiserror::Error;

pub use joint::{
    enumerate_consistent, enumerate_joint, exact_posterior, reference_reports, stack_at, state_at,
    JointTable, DEFAULT_ENTRY_BOUND,
};
pub use pcfg::{
    pcfg_tree_probability, to_pcfg, trajectory_tree, Pcfg, PcfgProduction, PcfgSymbol, PcfgTree,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration exceeds the bound of {bound} entries")]
    ExplosionBound { bound: usize },

    #[error("the evidence has zero probability")]
    ZeroEvidenceMass,

    #[error("two observations for t={t}")]
    DuplicateEvidence { t: usize },

    #[error("no such PCFG production: {0}")]
    UnknownProduction(String),

    #[error("trajectory does not describe a finished derivation")]
    IncompleteTree,
}
