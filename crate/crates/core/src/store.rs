//! Solver-facing store abstraction shared by the engine, the fixpoint
//! oracle and the projection harness.
//!
//! A `Store` is a finite conjunction of atomic constraints in canonical
//! form over one domain, or the distinguished inconsistent value. All
//! operations are value-oriented: conjoin returns a new store, nothing
//! is mutated in place. Entailment `c0 ⊑ c1` means every solution of
//! `c0` solves `c1`, with valuations ranging over the union of both
//! variable sets; comparisons across different variable tuples go
//! through an explicit `rename` first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::BigRational;
use thiserror::Error;

use crate::gaporder::GapStore;
use crate::herbrand::HerbrandStore;
use crate::lang::{ConstraintAtom, DomainTag, Gensym, Term, Var};
use crate::linq::LinStore;

pub type VarSet = BTreeSet<Var>;

/// A point of the domain: rational for linq, integer for gaporder,
/// ground term for herbrand.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Value {
    Rat(BigRational),
    Int(i64),
    Tree(Term),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Rat(r) => write!(f, "{r}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Tree(t) => write!(f, "{t}"),
        }
    }
}

/// Total or partial assignment of values to variables.
pub type Valuation = BTreeMap<Var, Value>;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("domain mismatch: {left} vs {right}")]
    DomainMismatch { left: DomainTag, right: DomainTag },
    #[error("renaming is not injective")]
    NonInjectiveRenaming,
    #[error("term `{term}` is not supported in the {domain} domain")]
    UnsupportedTerm { domain: DomainTag, term: String },
    #[error("not a gap-order atom: {0}")]
    MalformedGapAtom(String),
    #[error("elimination step exceeded the atom cap ({atoms} > {cap})")]
    EliminationBlowup { atoms: usize, cap: usize },
}

#[derive(Clone, Debug)]
pub enum Store {
    Herbrand(HerbrandStore),
    Lin(LinStore),
    Gap(GapStore),
}

impl Store {
    /// The empty conjunction (`true`) of the given domain.
    pub fn top(tag: DomainTag) -> Store {
        match tag {
            DomainTag::Herbrand => Store::Herbrand(HerbrandStore::top()),
            DomainTag::Linq => Store::Lin(LinStore::top()),
            DomainTag::GapOrder => Store::Gap(GapStore::top()),
        }
    }

    pub fn bottom(tag: DomainTag) -> Store {
        match tag {
            DomainTag::Herbrand => Store::Herbrand(HerbrandStore::bottom()),
            DomainTag::Linq => Store::Lin(LinStore::bottom()),
            DomainTag::GapOrder => Store::Gap(GapStore::bottom()),
        }
    }

    pub fn tag(&self) -> DomainTag {
        match self {
            Store::Herbrand(_) => DomainTag::Herbrand,
            Store::Lin(_) => DomainTag::Linq,
            Store::Gap(_) => DomainTag::GapOrder,
        }
    }

    pub fn is_consistent(&self) -> bool {
        match self {
            Store::Herbrand(s) => s.is_consistent(),
            Store::Lin(s) => s.is_consistent(),
            Store::Gap(s) => s.is_consistent(),
        }
    }

    /// Conjoins one constraint atom, interpreting it in the store's
    /// domain. Returns the (possibly inconsistent) extended store;
    /// errors are reserved for atoms the domain cannot express.
    pub fn conjoin_atom(&self, atom: &ConstraintAtom) -> Result<Store, SolverError> {
        match self {
            Store::Herbrand(s) => Ok(Store::Herbrand(s.conjoin_atom(atom)?)),
            Store::Lin(s) => Ok(Store::Lin(s.conjoin_atom(atom)?)),
            Store::Gap(s) => Ok(Store::Gap(s.conjoin_atom(atom)?)),
        }
    }

    /// Conjoins the equation `t1 = t2`.
    pub fn conjoin_eq(&self, t1: &Term, t2: &Term) -> Result<Store, SolverError> {
        self.conjoin_atom(&ConstraintAtom::eq(t1.clone(), t2.clone()))
    }

    /// Conjunction of two stores of the same domain.
    pub fn conjoin(&self, other: &Store) -> Result<Store, SolverError> {
        match (self, other) {
            (Store::Herbrand(a), Store::Herbrand(b)) => Ok(Store::Herbrand(a.conjoin(b)?)),
            (Store::Lin(a), Store::Lin(b)) => Ok(Store::Lin(a.conjoin(b)?)),
            (Store::Gap(a), Store::Gap(b)) => Ok(Store::Gap(a.conjoin(b))),
            _ => Err(SolverError::DomainMismatch {
                left: self.tag(),
                right: other.tag(),
            }),
        }
    }

    /// `self ⊑ other`: every solution of `self` is a solution of
    /// `other`. The inconsistent store entails everything and is
    /// entailed by nothing consistent.
    pub fn entails(&self, other: &Store) -> bool {
        if !self.is_consistent() {
            return true;
        }
        if !other.is_consistent() {
            return false;
        }
        match (self, other) {
            (Store::Herbrand(a), Store::Herbrand(b)) => a.entails(b),
            (Store::Lin(a), Store::Lin(b)) => a.entails(b),
            (Store::Gap(a), Store::Gap(b)) => a.entails(b),
            _ => {
                debug_assert!(false, "entailment across domains");
                false
            }
        }
    }

    pub fn mutually_entails(&self, other: &Store) -> bool {
        self.entails(other) && other.entails(self)
    }

    /// Existential projection onto `keep`: solutions of the result are
    /// exactly the restrictions of solutions of `self`.
    pub fn project(&self, keep: &VarSet) -> Result<Store, SolverError> {
        match self {
            Store::Herbrand(s) => Ok(Store::Herbrand(s.project(keep))),
            Store::Lin(s) => Ok(Store::Lin(s.project(keep)?)),
            Store::Gap(s) => Ok(Store::Gap(s.project(keep))),
        }
    }

    /// Applies an injective variable renaming.
    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> Result<Store, SolverError> {
        let mut seen = BTreeSet::new();
        for v in map.values() {
            if !seen.insert(v) {
                return Err(SolverError::NonInjectiveRenaming);
            }
        }
        match self {
            Store::Herbrand(s) => Ok(Store::Herbrand(s.rename(map))),
            Store::Lin(s) => Ok(Store::Lin(s.rename(map))),
            Store::Gap(s) => Ok(Store::Gap(s.rename(map))),
        }
    }

    /// Variables with at least one constraint on them.
    pub fn vars(&self) -> VarSet {
        match self {
            Store::Herbrand(s) => s.vars(),
            Store::Lin(s) => s.vars(),
            Store::Gap(s) => s.vars(),
        }
    }

    /// Canonical rendering: atoms sorted lexicographically, joined with
    /// `", "`; `true` for the empty store, `false` when inconsistent.
    pub fn render(&self) -> String {
        if !self.is_consistent() {
            return "false".to_string();
        }
        let atoms = match self {
            Store::Herbrand(s) => s.render_atoms(),
            Store::Lin(s) => s.render_atoms(),
            Store::Gap(s) => s.render_atoms(),
        };
        if atoms.is_empty() {
            "true".to_string()
        } else {
            atoms.join(", ")
        }
    }

    /// Checks a total valuation against the constraints. `None` when the
    /// valuation does not bind every constrained variable or binds one
    /// to a value of the wrong kind.
    pub fn satisfies(&self, val: &Valuation) -> Option<bool> {
        if !self.is_consistent() {
            return Some(false);
        }
        match self {
            Store::Herbrand(s) => s.satisfies(val),
            Store::Lin(s) => s.satisfies(val),
            Store::Gap(s) => s.satisfies(val),
        }
    }

    /// Resolves `t` through the store's bindings when that yields a
    /// fully determined term: Herbrand terms resolve when ground, linq
    /// variables resolve to a symbol they are pinned to. Everything
    /// else stays syntactic. Call patterns are built from this view.
    pub fn instantiate(&self, t: &Term) -> Term {
        match self {
            Store::Herbrand(s) => {
                let r = s.resolve_term(t);
                if r.is_ground() {
                    r
                } else {
                    t.clone()
                }
            }
            Store::Lin(s) => match t {
                Term::Var(v) => match s.sym_value(v) {
                    Some(sym) => Term::Sym(sym),
                    None => t.clone(),
                },
                _ => t.clone(),
            },
            Store::Gap(_) => t.clone(),
        }
    }

    /// Keeps only the canonical atoms whose variables all lie in
    /// `keep`, dropping the rest. This is the syntactic
    /// over-approximation of projection: every solution of the precise
    /// projection still satisfies the kept atoms.
    pub fn drop_atoms_outside(&self, keep: &VarSet) -> Result<Store, SolverError> {
        match self {
            Store::Herbrand(s) => Ok(Store::Herbrand(s.drop_atoms_outside(keep))),
            Store::Lin(s) => Ok(Store::Lin(s.drop_atoms_outside(keep)?)),
            // gap projection restricts the closed graph to kept nodes,
            // which is exactly "drop atoms mentioning other variables"
            Store::Gap(s) => Ok(Store::Gap(s.project(keep))),
        }
    }

    /// One equality atom pinning some variable of `keep` to a sample
    /// solution value, when the domain exposes a sample and the
    /// variable is not already pinned. Deterministic: the smallest
    /// eligible variable is chosen.
    pub fn sample_binding(&self, keep: &VarSet) -> Option<ConstraintAtom> {
        if !self.is_consistent() {
            return None;
        }
        match self {
            Store::Herbrand(_) => None,
            Store::Lin(s) => {
                for v in keep {
                    if s.point_value(v).is_none() {
                        if let Some(w) = s.witness_of(v) {
                            return Some(ConstraintAtom::eq(
                                Term::Var(v.clone()),
                                Term::Rat(w),
                            ));
                        }
                    }
                }
                None
            }
            Store::Gap(s) => {
                let model = s.model()?;
                for v in keep {
                    if model.contains_key(v) && s.point_value(v).is_none() {
                        return Some(ConstraintAtom::eq(
                            Term::Var(v.clone()),
                            Term::int(model[v]),
                        ));
                    }
                }
                None
            }
        }
    }

    /// Existential witnesses introduced by projection, if any.
    pub fn witness_vars(&self) -> Vec<Var> {
        match self {
            Store::Herbrand(s) => s.witness_vars(),
            Store::Lin(_) | Store::Gap(_) => Vec::new(),
        }
    }

    /// Replaces projection witnesses by fresh plain variables so the
    /// store can be conjoined into a live derivation without capturing
    /// witnesses of another store. The existential reading is
    /// preserved because the fresh variables are never reused.
    pub fn unseal_witnesses(&self, gensym: &mut Gensym) -> Result<Store, SolverError> {
        let ws = self.witness_vars();
        if ws.is_empty() {
            return Ok(self.clone());
        }
        let map: BTreeMap<Var, Var> = ws.into_iter().map(|w| (w, gensym.fresh())).collect();
        self.rename(&map)
    }
}

impl PartialEq for Store {
    /// Canonical-form equality: mutually entailing stores of the same
    /// domain compare equal.
    fn eq(&self, other: &Store) -> bool {
        if self.tag() != other.tag() {
            return false;
        }
        if !self.is_consistent() || !other.is_consistent() {
            return self.is_consistent() == other.is_consistent();
        }
        self.render() == other.render()
    }
}

impl Eq for Store {}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Set-level entailment: every store of `c0` is entailed by some store
/// of `c1`.
pub fn covers(c0: &[Store], c1: &[Store]) -> bool {
    c0.iter().all(|c| c1.iter().any(|d| c.entails(d)))
}

/// Builds the argument equations `t_i = g_i` between two equal-length
/// argument lists, as constraint atoms.
pub fn arg_equations(left: &[Term], right: &[Term]) -> Vec<ConstraintAtom> {
    debug_assert_eq!(left.len(), right.len());
    left.iter()
        .zip(right)
        .map(|(l, r)| ConstraintAtom::eq(l.clone(), r.clone()))
        .collect()
}
