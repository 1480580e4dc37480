//! Tabled constraint logic programming over pluggable constraint domains.
//!
//! The crate is organized around three layers:
//!
//! * `lang` — syntax: terms, clauses, programs, queries.
//! * `store` + the domain modules `herbrand`, `linq`, `gaporder` —
//!   constraint stores with consistency, entailment, projection,
//!   conjunction and renaming.
//! * `engine` — resolution forests with call and answer entailment,
//!   plus the `fixpoint` bottom-up oracle and the `projvariants`
//!   projection-variant harness used to cross-check it.

pub mod engine;
pub mod fixpoint;
pub mod gaporder;
pub mod herbrand;
pub mod lang;
pub mod linq;
pub mod projvariants;
pub mod store;

pub use engine::{
    run_matrix, solve, AnswerPolicy, EngineConfig, EngineError, ForestRecord, MatrixReport,
    RunStatus, SolveResult, Stats, Strategy, DEFAULT_BUDGET,
};
pub use fixpoint::{
    check_completeness, check_covered, check_soundness, lfp, s_step, FixpointError,
    Interpretation, LfpOutcome,
};
pub use lang::{DomainTag, Program, Query};
pub use projvariants::{
    apply_projection, run_variant_matrix, standard_corpus, CorpusEntry, ProjectionMode,
    VariantMatrixReport,
};
pub use store::{covers, SolverError, Store, Valuation, Value, VarSet};
