//! Bottom-up evaluation of constrained programs.
//!
//! An interpretation is a set of *constrained facts* `pred(V0, ...,
//! Vn-1) :: store`. The one-step consequence operator instantiates
//! every clause with already-derived facts for its body literals,
//! conjoins the clause constraints in order, and projects the
//! resulting store onto the head variables. Iterating from the empty
//! interpretation yields the least fixpoint when it is reached within
//! the iteration bound.
//!
//! This is a deliberately independent formulation of the semantics —
//! no tabling, no suspension, no answer policies — and serves as an
//! oracle for the goal-directed engine: sound engine runs only report
//! answers covered by some constrained fact restricted to the query,
//! and complete runs cover every such restriction.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{
    rename_apart, BodyItem, Gensym, Literal, Program, Query, Term, Var,
};
use crate::store::{arg_equations, SolverError, Store, VarSet};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FixpointError {
    #[error("bottom-up iteration did not reach a fixpoint; the oracle is incomplete")]
    OracleIncomplete,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One constrained fact: the literal's arguments are always the
/// canonical variables `V0..Vn-1`, and the store constrains them.
#[derive(Clone, Debug)]
pub struct FactPair {
    pub literal: Literal,
    pub store: Store,
}

/// A set of constrained facts, grouped by predicate, deduplicated by
/// entailment: a new fact subsumed by an existing one is not added.
#[derive(Clone, Debug, Default)]
pub struct Interpretation {
    by_pred: BTreeMap<(Arc<str>, usize), Vec<FactPair>>,
    len: usize,
}

impl Interpretation {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pairs_for(&self, pred: &str, arity: usize) -> &[FactPair] {
        self.by_pred
            .get(&(Arc::from(pred), arity))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn pairs(&self) -> impl Iterator<Item = &FactPair> {
        self.by_pred.values().flatten()
    }

    /// Adds unless an existing fact for the same predicate already
    /// entails it (the canonical argument naming makes the stores
    /// directly comparable). Returns whether the set changed.
    fn add(&mut self, pair: FactPair) -> bool {
        let key = pair.literal.key();
        let bucket = self.by_pred.entry(key).or_default();
        if bucket.iter().any(|p| pair.store.entails(&p.store)) {
            return false;
        }
        bucket.push(pair);
        self.len += 1;
        true
    }

    /// Stable text dump: one `pred(V0, ...) :: store` line per fact,
    /// sorted by predicate and store rendering.
    pub fn render_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = Vec::new();
        for pairs in self.by_pred.values() {
            let mut group: Vec<String> = pairs
                .iter()
                .map(|p| format!("{} :: {}", p.literal, p.store.render()))
                .collect();
            group.sort();
            lines.extend(group);
        }
        lines
    }
}

fn canonical_head(pred: &Arc<str>, arity: usize) -> (Literal, Vec<Var>) {
    let vars: Vec<Var> = (0..arity).map(|i| Var::named(&format!("V{i}"))).collect();
    let literal = Literal {
        pred: pred.clone(),
        args: vars.iter().cloned().map(Term::Var).collect(),
    };
    (literal, vars)
}

/// Renames a fact apart (canonical variables and projection witnesses
/// both become fresh variables) and returns the renamed argument terms
/// with the renamed store.
fn fresh_copy(
    pair: &FactPair,
    gensym: &mut Gensym,
) -> Result<(Vec<Term>, Store), SolverError> {
    let unsealed = pair.store.unseal_witnesses(gensym)?;
    let map: BTreeMap<Var, Var> = pair
        .literal
        .vars()
        .into_iter()
        .map(|v| {
            let f = gensym.fresh();
            (v, f)
        })
        .collect();
    let args: Vec<Term> = pair
        .literal
        .args
        .iter()
        .map(|t| crate::lang::rename_term(t, &map))
        .collect();
    Ok((args, unsealed.rename(&map)?))
}

/// Extends `store` through the remaining body items, calling `out` for
/// every successful completion.
fn extend_body(
    interp: &Interpretation,
    items: &[BodyItem],
    store: Store,
    gensym: &mut Gensym,
    out: &mut dyn FnMut(Store) -> Result<(), SolverError>,
) -> Result<(), SolverError> {
    if !store.is_consistent() {
        return Ok(());
    }
    match items.split_first() {
        None => out(store),
        Some((BodyItem::Constraint(atom), rest)) => {
            let next = store.conjoin_atom(atom)?;
            extend_body(interp, rest, next, gensym, out)
        }
        Some((BodyItem::Literal(lit), rest)) => {
            let pairs: Vec<FactPair> =
                interp.pairs_for(&lit.pred, lit.args.len()).to_vec();
            for pair in &pairs {
                let (args, pstore) = fresh_copy(pair, gensym)?;
                let mut next = store.clone();
                for eq in arg_equations(&lit.args, &args) {
                    next = next.conjoin_atom(&eq)?;
                    if !next.is_consistent() {
                        break;
                    }
                }
                if !next.is_consistent() {
                    continue;
                }
                let next = next.conjoin(&pstore)?;
                extend_body(interp, rest, next, gensym, out)?;
            }
            Ok(())
        }
    }
}

/// One application of the consequence operator: returns `interp`
/// extended with every fact derivable from it in one clause step, and
/// whether anything was added.
pub fn s_step(program: &Program, interp: &Interpretation) -> Result<(Interpretation, bool), FixpointError> {
    let mut next = interp.clone();
    let mut changed = false;
    let mut gensym = Gensym::new();
    for clause in &program.clauses {
        let arity = clause.head.args.len();
        let (canon_lit, canon_vars) = canonical_head(&clause.head.pred, arity);
        let renamed = rename_apart(clause, &mut gensym);
        let mut store = Store::top(program.solver);
        for eq in arg_equations(&canon_lit.args, &renamed.head.args) {
            store = store.conjoin_atom(&eq)?;
            if !store.is_consistent() {
                break;
            }
        }
        let keep: VarSet = canon_vars.iter().cloned().collect();
        let body: Vec<BodyItem> = renamed.body.iter().cloned().collect();
        let mut derived: Vec<Store> = Vec::new();
        extend_body(interp, &body, store, &mut gensym, &mut |complete| {
            derived.push(complete.project(&keep)?);
            Ok(())
        })?;
        for c in derived {
            if !c.is_consistent() {
                continue;
            }
            if next.add(FactPair {
                literal: canon_lit.clone(),
                store: c,
            }) {
                changed = true;
            }
        }
    }
    Ok((next, changed))
}

#[derive(Clone, Debug)]
pub enum LfpOutcome {
    /// The iteration stabilized on this interpretation.
    Fixpoint(Interpretation),
    /// Still growing when the iteration bound was hit.
    BoundExceeded(Interpretation),
}

impl LfpOutcome {
    pub fn interpretation(&self) -> &Interpretation {
        match self {
            LfpOutcome::Fixpoint(i) | LfpOutcome::BoundExceeded(i) => i,
        }
    }

    fn fixpoint(&self) -> Result<&Interpretation, FixpointError> {
        match self {
            LfpOutcome::Fixpoint(i) => Ok(i),
            LfpOutcome::BoundExceeded(_) => Err(FixpointError::OracleIncomplete),
        }
    }
}

pub const DEFAULT_ITER_BOUND: usize = 100;

/// Iterates the consequence operator from the empty interpretation.
pub fn lfp(program: &Program, iter_bound: usize) -> Result<LfpOutcome, FixpointError> {
    let mut interp = Interpretation::default();
    for _ in 0..iter_bound {
        let (next, changed) = s_step(program, &interp)?;
        if !changed {
            return Ok(LfpOutcome::Fixpoint(next));
        }
        interp = next;
    }
    Ok(LfpOutcome::BoundExceeded(interp))
}

/// The query's initial store: its constraint prefix conjoined onto the
/// empty store.
pub fn query_store(program: &Program, query: &Query) -> Result<Store, SolverError> {
    let mut store = Store::top(program.solver);
    for atom in &query.constraints {
        store = store.conjoin_atom(atom)?;
    }
    Ok(store)
}

/// The restriction of one constrained fact to the query: the query
/// store, the fact's store, and the argument equations between the
/// query goal and the fact, projected onto the query variables.
/// `None` when the combination is inconsistent.
fn restrict_to_query(
    program: &Program,
    query: &Query,
    pair: &FactPair,
    gensym: &mut Gensym,
) -> Result<Option<Store>, SolverError> {
    let (args, pstore) = fresh_copy(pair, gensym)?;
    let mut store = query_store(program, query)?;
    for eq in arg_equations(&query.goal.args, &args) {
        store = store.conjoin_atom(&eq)?;
        if !store.is_consistent() {
            return Ok(None);
        }
    }
    let store = store.conjoin(&pstore)?;
    if !store.is_consistent() {
        return Ok(None);
    }
    let keep: VarSet = query.vars().into_iter().collect();
    Ok(Some(store.project(&keep)?))
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub ok: bool,
    pub failures: Vec<String>,
}

fn query_restrictions(
    program: &Program,
    query: &Query,
    outcome: &LfpOutcome,
) -> Result<Vec<Store>, FixpointError> {
    let interp = outcome.fixpoint()?;
    let mut gensym = Gensym::new();
    let mut restrictions = Vec::new();
    for pair in interp.pairs_for(&query.goal.pred, query.goal.args.len()) {
        if let Some(r) = restrict_to_query(program, query, pair, &mut gensym)? {
            restrictions.push(r);
        }
    }
    Ok(restrictions)
}

/// Soundness of a set of query answers against a fixpoint, at the
/// strength the top-down/bottom-up equivalence guarantees for precise
/// projections: every answer must *mutually* entail some restriction
/// of a constrained fact for the goal predicate.
pub fn check_soundness(
    program: &Program,
    query: &Query,
    outcome: &LfpOutcome,
    answers: &[Store],
) -> Result<CheckReport, FixpointError> {
    let restrictions = query_restrictions(program, query, outcome)?;
    let mut failures = Vec::new();
    for ans in answers {
        if !restrictions.iter().any(|r| ans.mutually_entails(r)) {
            failures.push(format!(
                "answer `{}` does not match any bottom-up fact",
                ans.render()
            ));
        }
    }
    Ok(CheckReport {
        ok: failures.is_empty(),
        failures,
    })
}

/// Weak (solution-set) soundness: every answer's solutions must be
/// contained in some bottom-up restriction. This is the right judge
/// for approximate projections, where sound answers may be strictly
/// narrower than the oracle's.
pub fn check_covered(
    program: &Program,
    query: &Query,
    outcome: &LfpOutcome,
    answers: &[Store],
) -> Result<CheckReport, FixpointError> {
    let restrictions = query_restrictions(program, query, outcome)?;
    let mut failures = Vec::new();
    for ans in answers {
        if !restrictions.iter().any(|r| ans.entails(r)) {
            failures.push(format!(
                "answer `{}` is not covered by any bottom-up fact",
                ans.render()
            ));
        }
    }
    Ok(CheckReport {
        ok: failures.is_empty(),
        failures,
    })
}

/// Completeness of a set of query answers against a fixpoint: every
/// consistent restriction of a constrained fact for the goal predicate
/// must be entailed by some answer.
pub fn check_completeness(
    program: &Program,
    query: &Query,
    outcome: &LfpOutcome,
    answers: &[Store],
) -> Result<CheckReport, FixpointError> {
    let restrictions = query_restrictions(program, query, outcome)?;
    let mut failures = Vec::new();
    for r in restrictions {
        if !answers.iter().any(|a| r.entails(a)) {
            failures.push(format!(
                "bottom-up fact restriction `{}` is not covered by any answer",
                r.render()
            ));
        }
    }
    Ok(CheckReport {
        ok: failures.is_empty(),
        failures,
    })
}
