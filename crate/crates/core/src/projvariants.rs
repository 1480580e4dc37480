//! Pluggable projection operators and the soundness/completeness
//! harness that compares them.
//!
//! The tabling engine projects twice — once on the call store when a
//! generator is created, once on the answer store when an answer is
//! recorded. Each site can run the precise existential projection or
//! one of three deliberate approximations, and the harness measures
//! what each combination does to soundness and completeness against
//! the bottom-up oracle.

use std::fmt;

use serde_json::{json, Value as Json};

use crate::engine::{solve, EngineConfig, EngineError, RunStatus};
use crate::fixpoint::{check_completeness, check_covered, lfp, FixpointError, LfpOutcome};
use crate::lang::{parse_program, parse_query, Program, Query};
use crate::store::{SolverError, Store, VarSet};

/// How a store is projected onto a variable set.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ProjectionMode {
    /// Exact existential projection: solutions of the result are
    /// exactly the restrictions of solutions of the input.
    Precise,
    /// The trivial over-approximation: forget everything (`true`).
    OverTrue,
    /// Keep only the atoms whose variables all lie in the kept set;
    /// links through dropped variables are lost, so the result is a
    /// (possibly strict) over-approximation.
    OverDrop,
    /// The precise projection strengthened by pinning one variable to
    /// a sampled solution value: an under-approximation.
    UnderSample,
}

impl ProjectionMode {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionMode::Precise => "precise",
            ProjectionMode::OverTrue => "over-true",
            ProjectionMode::OverDrop => "over-drop",
            ProjectionMode::UnderSample => "under-sample",
        }
    }

    pub fn parse(s: &str) -> Option<ProjectionMode> {
        match s {
            "precise" => Some(ProjectionMode::Precise),
            "over-true" | "over_true" => Some(ProjectionMode::OverTrue),
            "over-drop" | "over_drop" => Some(ProjectionMode::OverDrop),
            "under-sample" | "under_sample" => Some(ProjectionMode::UnderSample),
            _ => None,
        }
    }
}

impl fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one projection application. `sample_fallback` is set when
/// the under-approximating mode found no variable to pin and fell back
/// to the precise result.
#[derive(Clone, Debug)]
pub struct Projected {
    pub store: Store,
    pub sample_fallback: bool,
}

/// Projects `c` onto `keep` under the chosen mode.
pub fn apply_projection(
    mode: ProjectionMode,
    c: &Store,
    keep: &VarSet,
) -> Result<Projected, SolverError> {
    let plain = |store: Store| Projected {
        store,
        sample_fallback: false,
    };
    match mode {
        ProjectionMode::Precise => Ok(plain(c.project(keep)?)),
        ProjectionMode::OverTrue => Ok(plain(Store::top(c.tag()))),
        ProjectionMode::OverDrop => Ok(plain(c.drop_atoms_outside(keep)?)),
        ProjectionMode::UnderSample => {
            let base = c.project(keep)?;
            match base.sample_binding(keep) {
                Some(atom) => Ok(plain(base.conjoin_atom(&atom)?)),
                None => Ok(Projected {
                    store: base,
                    sample_fallback: true,
                }),
            }
        }
    }
}

// ---------------------------------------------------------------------
// The soundness x completeness matrix over projection modes
// ---------------------------------------------------------------------

/// Call-site modes exercised by the matrix: the over-approximation
/// representative for calls is the call abstraction (`true` store).
pub const CALL_MODES: [ProjectionMode; 3] = [
    ProjectionMode::Precise,
    ProjectionMode::OverTrue,
    ProjectionMode::UnderSample,
];

/// Answer-site modes exercised by the matrix: the over-approximation
/// representative for answers keeps only atoms inside the projection
/// set (dropping linking atoms loses implied bounds).
pub const ANSWER_MODES: [ProjectionMode; 3] = [
    ProjectionMode::Precise,
    ProjectionMode::OverDrop,
    ProjectionMode::UnderSample,
];

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub program: Program,
    pub query: Query,
}

const DIST_WINDOW_TEXT: &str = "\
:- solver(linq).
:- table dist/3.
dist(X, Y, D) :- {D1 > 0, D2 > 0, D = D1 + D2}, edge(X, Z, D1), dist(Z, Y, D2).
dist(X, Y, D) :- edge(X, Y, D).
edge(a, b, 50).
edge(b, c, W) :- {W > 25, W < 35}.
";

const P_PROGRAM_TEXT: &str = "\
:- solver(herbrand).
:- table p/1.
p(X) :- {Y = f(X)}, p(Y).
p(a).
";

const GAP_REACH_TEXT: &str = "\
:- solver(gaporder).
:- table reach/2.
edge_gap(X, Y) :- {Y > X + 1}.
reach(X, Y) :- edge_gap(X, Y).
reach(X, Y) :- edge_gap(X, Z), reach(Z, Y).
";

/// The three-domain corpus used to populate the matrix. Every entry
/// has a finite bottom-up fixpoint, so the oracle is always available:
///
/// * an acyclic linear-arithmetic distance program whose second edge
///   carries a weight window (so answers are genuine intervals),
/// * a Herbrand program whose single answer needs call entailment to
///   terminate,
/// * an integer gap-order reachability program.
pub fn standard_corpus() -> Vec<CorpusEntry> {
    let entry = |name, text: &str, query: &str| CorpusEntry {
        name,
        program: parse_program(text).expect("corpus program parses"),
        query: parse_query(query).expect("corpus query parses"),
    };
    vec![
        entry("dist-window", DIST_WINDOW_TEXT, "?- {D < 150}, dist(a, Y, D)."),
        entry("p-chain", P_PROGRAM_TEXT, "?- p(X)."),
        entry("gap-reach", GAP_REACH_TEXT, "?- {0 < X, X < 4}, reach(X, Y)."),
    ]
}

/// One cell of the matrix: verdicts aggregated with AND across the
/// corpus, witnesses naming the first failing entry and store.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub call_mode: ProjectionMode,
    pub answer_mode: ProjectionMode,
    pub sound: bool,
    pub complete: bool,
    pub soundness_witnesses: Vec<String>,
    pub completeness_witnesses: Vec<String>,
    pub statuses: Vec<(String, RunStatus)>,
}

#[derive(Clone, Debug)]
pub struct VariantMatrixReport {
    pub budget: u64,
    /// Row-major over `ANSWER_MODES` x `CALL_MODES`, mirroring the
    /// table layout (rows select the answer mode).
    pub cells: Vec<CellOutcome>,
}

#[derive(Debug, thiserror::Error)]
pub enum VariantError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fixpoint(#[from] FixpointError),
    #[error("corpus entry `{0}` has no stabilizing fixpoint; cannot judge variants against it")]
    OracleUnavailable(String),
}

/// Runs the whole matrix: every (answer mode, call mode) pair over
/// every corpus entry, judged for soundness (every reported answer is
/// covered by the bottom-up oracle) and completeness (every oracle
/// restriction is covered by some answer).
pub fn run_variant_matrix(
    corpus: &[CorpusEntry],
    budget: u64,
) -> Result<VariantMatrixReport, VariantError> {
    // oracle once per entry
    let mut oracles: Vec<LfpOutcome> = Vec::new();
    for entry in corpus {
        let outcome = lfp(&entry.program, crate::fixpoint::DEFAULT_ITER_BOUND)?;
        if matches!(outcome, LfpOutcome::BoundExceeded(_)) {
            return Err(VariantError::OracleUnavailable(entry.name.to_string()));
        }
        oracles.push(outcome);
    }

    let mut cells = Vec::new();
    for answer_mode in ANSWER_MODES {
        for call_mode in CALL_MODES {
            let mut cell = CellOutcome {
                call_mode,
                answer_mode,
                sound: true,
                complete: true,
                soundness_witnesses: Vec::new(),
                completeness_witnesses: Vec::new(),
                statuses: Vec::new(),
            };
            for (entry, oracle) in corpus.iter().zip(&oracles) {
                let cfg = EngineConfig {
                    call_projection: call_mode,
                    answer_projection: answer_mode,
                    budget,
                    ..EngineConfig::default()
                };
                let result = solve(&entry.program, &entry.query, &cfg)?;
                cell.statuses
                    .push((entry.name.to_string(), result.status));
                let sound =
                    check_covered(&entry.program, &entry.query, oracle, &result.answers)?;
                if !sound.ok {
                    cell.sound = false;
                    for f in sound.failures {
                        cell.soundness_witnesses.push(format!("{}: {f}", entry.name));
                    }
                }
                let complete =
                    check_completeness(&entry.program, &entry.query, oracle, &result.answers)?;
                if !complete.ok {
                    cell.complete = false;
                    for f in complete.failures {
                        cell.completeness_witnesses
                            .push(format!("{}: {f}", entry.name));
                    }
                }
            }
            cells.push(cell);
        }
    }
    Ok(VariantMatrixReport { budget, cells })
}

impl VariantMatrixReport {
    pub fn cell(&self, call_mode: ProjectionMode, answer_mode: ProjectionMode) -> &CellOutcome {
        self.cells
            .iter()
            .find(|c| c.call_mode == call_mode && c.answer_mode == answer_mode)
            .expect("matrix covers all mode pairs")
    }

    fn render_grid(&self, f: impl Fn(&CellOutcome) -> bool) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:<14} {:<14} {:<14}\n",
            "answer \\ call", "precise", "over-true", "under-sample"
        ));
        for answer_mode in ANSWER_MODES {
            let mut row = format!("{:<22} ", answer_mode.name());
            for call_mode in CALL_MODES {
                let cell = self.cell(call_mode, answer_mode);
                row.push_str(&format!("{:<14} ", if f(cell) { "ok" } else { "violated" }));
            }
            out.push_str(row.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("soundness preservation:\n");
        out.push_str(&self.render_grid(|c| c.sound));
        out.push_str("\ncompleteness preservation:\n");
        out.push_str(&self.render_grid(|c| c.complete));
        out.push_str("\nwitnesses:\n");
        for cell in &self.cells {
            let label = format!("(call={}, answer={})", cell.call_mode, cell.answer_mode);
            for w in &cell.soundness_witnesses {
                out.push_str(&format!("{label} unsound: {w}\n"));
            }
            for w in &cell.completeness_witnesses {
                out.push_str(&format!("{label} incomplete: {w}\n"));
            }
            if cell.sound && cell.soundness_witnesses.is_empty() && cell.answer_mode == ProjectionMode::OverDrop
            {
                out.push_str(&format!(
                    "{label} sound: no counterexample found in corpus\n"
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let cells: Vec<Json> = self
            .cells
            .iter()
            .map(|c| {
                json!({
                    "call_mode": c.call_mode.name(),
                    "answer_mode": c.answer_mode.name(),
                    "sound": c.sound,
                    "complete": c.complete,
                    "soundness_witnesses": c.soundness_witnesses,
                    "completeness_witnesses": c.completeness_witnesses,
                    "statuses": c.statuses.iter()
                        .map(|(n, s)| json!({"entry": n, "status": s.name()}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({"budget": self.budget, "cells": cells})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::DomainTag;
    use crate::store::Store;

    fn store_from(tag: DomainTag, atoms: &str) -> Store {
        let q = parse_query(&format!("?- {{{atoms}}}, ignore(Z9)."))
            .expect("atoms parse");
        let mut s = Store::top(tag);
        for a in &q.constraints {
            s = s.conjoin_atom(a).expect("atoms conjoin");
        }
        s
    }

    fn keep(names: &[&str]) -> VarSet {
        names.iter().map(|n| crate::lang::Var::named(n)).collect()
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [
            ProjectionMode::Precise,
            ProjectionMode::OverTrue,
            ProjectionMode::OverDrop,
            ProjectionMode::UnderSample,
        ] {
            assert_eq!(ProjectionMode::parse(mode.name()), Some(mode));
        }
        assert_eq!(
            ProjectionMode::parse("under_sample"),
            Some(ProjectionMode::UnderSample)
        );
        assert_eq!(ProjectionMode::parse("nonsense"), None);
    }

    // On every domain the modes must order by solution inclusion:
    // under-sample => precise => over-drop, and precise => over-true.
    fn assert_mode_ordering(c: &Store, kept: &VarSet) {
        let precise = apply_projection(ProjectionMode::Precise, c, kept)
            .unwrap()
            .store;
        let over_true = apply_projection(ProjectionMode::OverTrue, c, kept)
            .unwrap()
            .store;
        let over_drop = apply_projection(ProjectionMode::OverDrop, c, kept)
            .unwrap()
            .store;
        let under = apply_projection(ProjectionMode::UnderSample, c, kept)
            .unwrap()
            .store;
        assert!(under.entails(&precise), "under-sample refines precise");
        assert!(precise.entails(&over_drop), "precise refines over-drop");
        assert!(precise.entails(&over_true), "precise refines over-true");
    }

    #[test]
    fn linear_modes_order_by_inclusion_and_drop_loses_linked_bounds() {
        let c = store_from(DomainTag::Linq, "D = D1 + 50, D1 > 25, D1 < 35");
        let kept = keep(&["D"]);
        assert_mode_ordering(&c, &kept);

        let precise = apply_projection(ProjectionMode::Precise, &c, &kept)
            .unwrap()
            .store;
        assert_eq!(precise.render(), "D < 85, D > 75");

        // the implied window on D lives in rows that mention D1, so the
        // atom-dropping over-approximation forgets it entirely
        let dropped = apply_projection(ProjectionMode::OverDrop, &c, &kept)
            .unwrap()
            .store;
        assert!(dropped.entails(&Store::top(DomainTag::Linq)));
        assert!(!dropped.entails(&precise));

        let under =
            apply_projection(ProjectionMode::UnderSample, &c, &kept).unwrap();
        assert!(!under.sample_fallback);
        assert!(!precise.entails(&under.store), "the pin is strict");
    }

    #[test]
    fn herbrand_modes_fall_back_when_nothing_can_be_pinned() {
        let c = store_from(DomainTag::Herbrand, "X = g(Y)");
        let kept = keep(&["X"]);
        assert_mode_ordering(&c, &kept);
        let under =
            apply_projection(ProjectionMode::UnderSample, &c, &kept).unwrap();
        assert!(under.sample_fallback, "no finite sample for open terms");
        let precise =
            apply_projection(ProjectionMode::Precise, &c, &kept).unwrap();
        assert!(under.store.mutually_entails(&precise.store));
    }

    #[test]
    fn gap_modes_pin_an_integer_point() {
        let c = store_from(DomainTag::GapOrder, "X > 2, X < 9");
        let kept = keep(&["X"]);
        assert_mode_ordering(&c, &kept);
        let under =
            apply_projection(ProjectionMode::UnderSample, &c, &kept).unwrap();
        assert!(!under.sample_fallback);
    }

    #[test]
    fn matrix_matches_the_expected_preservation_pattern() {
        let corpus = standard_corpus();
        let report = run_variant_matrix(&corpus, 10_000).expect("matrix runs");

        // rows: answer mode; columns: call mode (precise, over, under).
        // `Some` cells are guaranteed either way; `None` cells are the
        // not-preserved ones where the corpus merely may exhibit a
        // counterexample (absence is reported, not asserted).
        let expected_sound = [
            (ProjectionMode::Precise, [Some(true), Some(true), Some(true)]),
            (ProjectionMode::OverDrop, [Some(false), None, None]),
            (
                ProjectionMode::UnderSample,
                [Some(true), Some(true), Some(true)],
            ),
        ];
        let expected_complete = [
            (
                ProjectionMode::Precise,
                [Some(true), Some(true), Some(false)],
            ),
            (ProjectionMode::OverDrop, [Some(true), Some(true), None]),
            (ProjectionMode::UnderSample, [None, None, None]),
        ];
        for (answer_mode, row) in expected_sound {
            for (call_mode, want) in CALL_MODES.into_iter().zip(row) {
                let Some(want) = want else { continue };
                let cell = report.cell(call_mode, answer_mode);
                assert_eq!(
                    cell.sound, want,
                    "soundness at call={call_mode} answer={answer_mode}"
                );
            }
        }
        for (answer_mode, row) in expected_complete {
            for (call_mode, want) in CALL_MODES.into_iter().zip(row) {
                let Some(want) = want else { continue };
                let cell = report.cell(call_mode, answer_mode);
                assert_eq!(
                    cell.complete, want,
                    "completeness at call={call_mode} answer={answer_mode}"
                );
            }
        }

        // the required concrete witnesses
        let drop_cell =
            report.cell(ProjectionMode::Precise, ProjectionMode::OverDrop);
        assert!(
            drop_cell
                .soundness_witnesses
                .iter()
                .any(|w| w.starts_with("dist-window")),
            "{:?}",
            drop_cell.soundness_witnesses
        );
        let under_call_cell =
            report.cell(ProjectionMode::UnderSample, ProjectionMode::Precise);
        assert!(!under_call_cell.completeness_witnesses.is_empty());

        // fully precise runs complete on the whole corpus
        let precise =
            report.cell(ProjectionMode::Precise, ProjectionMode::Precise);
        assert!(precise
            .statuses
            .iter()
            .all(|(_, s)| *s == RunStatus::Complete));

        let text = report.render_text();
        assert!(text.contains("soundness preservation"));
        assert!(text.contains("violated"));
    }
}
