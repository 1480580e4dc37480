//! Two-sorted constraint domain: symbolic constants (trees of arity
//! zero) plus linear arithmetic over the rationals.
//!
//! Bare equations `X = Y` and `X = a` stay sort-neutral (alias classes
//! and symbol bindings); any atom with arithmetic structure forces its
//! variables onto the rational sort, so `{X = Y, X = a}` gives `Y = a`
//! while `{X + 0 = Y, X = a}` is inconsistent.
//!
//! Consistency is maintained incrementally through a cached rational
//! model (the witness): a new atom satisfied by the witness is free, a
//! violated one triggers a repair that re-solves the smallest region of
//! connected atoms that suffices, growing it only on failure. Full
//! Fourier-Motzkin runs are reserved for entailment, projection and the
//! canonical view, which operate on projected (small) stores.

mod canon;
mod solve;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::{BigRational, Signed, Zero};

use crate::lang::{ConstraintAtom, DomainTag, RelOp, Term, Var};
use crate::store::{SolverError, Valuation, Value, VarSet};

pub(crate) use canon::CanonLin;
use canon::canonicalize;
use solve::{eliminate, is_unsat, solve, LinRel, Reduced, Row, ELIM_CAP};

#[derive(Clone, Debug)]
pub struct LinStore {
    inconsistent: bool,
    /// Linear atoms over their insert-time representatives.
    atoms: im::Vector<Arc<Row>>,
    /// Alias forest: child -> parent, roots are representatives.
    parent: im::OrdMap<Var, Var>,
    /// Symbol bindings, keyed by representative.
    sym: im::OrdMap<Var, Arc<str>>,
    /// Atom indices touching each representative.
    index: im::OrdMap<Var, im::Vector<usize>>,
    /// Cached model of the linear part, keyed by representative.
    witness: im::OrdMap<Var, BigRational>,
}

enum Linearized {
    Form(BTreeMap<Var, BigRational>, BigRational),
    /// A symbolic constant inside arithmetic: no rational solutions.
    HasSym,
}

impl LinStore {
    pub fn top() -> LinStore {
        LinStore {
            inconsistent: false,
            atoms: im::Vector::new(),
            parent: im::OrdMap::new(),
            sym: im::OrdMap::new(),
            index: im::OrdMap::new(),
            witness: im::OrdMap::new(),
        }
    }

    pub fn bottom() -> LinStore {
        let mut s = LinStore::top();
        s.inconsistent = true;
        s
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    fn find(&self, v: &Var) -> Var {
        let mut cur = v.clone();
        while let Some(p) = self.parent.get(&cur) {
            cur = p.clone();
        }
        cur
    }

    fn set_bottom(&mut self) {
        *self = LinStore::bottom();
    }

    fn is_numeric(&self, rep: &Var) -> bool {
        self.index.get(rep).is_some_and(|ids| !ids.is_empty())
    }

    pub fn conjoin_atom(&self, atom: &ConstraintAtom) -> Result<LinStore, SolverError> {
        if self.inconsistent {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        next.add_atom(atom)?;
        Ok(next)
    }

    fn add_atom(&mut self, atom: &ConstraintAtom) -> Result<(), SolverError> {
        if atom.op == RelOp::Eq {
            match (&atom.lhs, &atom.rhs) {
                (Term::Var(x), Term::Var(y)) => return self.union(x, y),
                (Term::Var(x), Term::Sym(s)) | (Term::Sym(s), Term::Var(x)) => {
                    self.bind_sym(x, s);
                    return Ok(());
                }
                (Term::Sym(a), Term::Sym(b)) => {
                    if a != b {
                        self.set_bottom();
                    }
                    return Ok(());
                }
                _ => {}
            }
        }
        let lhs = self.linearize(&atom.lhs, atom)?;
        let rhs = self.linearize(&atom.rhs, atom)?;
        let (Linearized::Form(lt, lk), Linearized::Form(rt, rk)) = (lhs, rhs) else {
            // a tree met forced arithmetic: no solution
            self.set_bottom();
            return Ok(());
        };
        // move everything left: (lt - rt) op (rk - lk)
        let mut terms = lt;
        for (v, c) in rt {
            let cur = terms.remove(&v).unwrap_or_else(BigRational::zero);
            let next = cur - c;
            if !next.is_zero() {
                terms.insert(v, next);
            }
        }
        let rhs_const = rk - lk;
        let (terms, rel, rhs_const) = match atom.op {
            RelOp::Lt => (terms, LinRel::Lt, rhs_const),
            RelOp::Le => (terms, LinRel::Le, rhs_const),
            RelOp::Eq => (terms, LinRel::Eq, rhs_const),
            // a > b and a >= b mirror to b - a < 0 form by negation
            RelOp::Gt => (negate_terms(terms), LinRel::Lt, -rhs_const),
            RelOp::Ge => (negate_terms(terms), LinRel::Le, -rhs_const),
        };
        self.insert_row(Row {
            terms,
            rel,
            rhs: rhs_const,
        })
    }

    /// Flattens a term to a linear form over current representatives.
    /// Symbolic constants yield `HasSym`; compound trees and nonlinear
    /// products are errors.
    fn linearize(&self, t: &Term, atom: &ConstraintAtom) -> Result<Linearized, SolverError> {
        let unsupported = || SolverError::UnsupportedTerm {
            domain: DomainTag::Linq,
            term: atom.to_string(),
        };
        Ok(match t {
            Term::Var(v) => {
                let mut terms = BTreeMap::new();
                terms.insert(self.find(v), BigRational::from_integer(1.into()));
                Linearized::Form(terms, BigRational::zero())
            }
            Term::Sym(_) => Linearized::HasSym,
            Term::Rat(r) => Linearized::Form(BTreeMap::new(), r.clone()),
            Term::App(app) => match (&*app.functor, app.args.as_slice()) {
                ("+", [a, b]) | ("-", [a, b]) => {
                    let (la, lb) = (self.linearize(a, atom)?, self.linearize(b, atom)?);
                    let (Linearized::Form(ta, ka), Linearized::Form(tb, kb)) = (la, lb) else {
                        return Ok(Linearized::HasSym);
                    };
                    let minus = &*app.functor == "-";
                    let mut terms = ta;
                    for (v, c) in tb {
                        let cur = terms.remove(&v).unwrap_or_else(BigRational::zero);
                        let next = if minus { cur - c } else { cur + c };
                        if !next.is_zero() {
                            terms.insert(v, next);
                        }
                    }
                    let k = if minus { ka - kb } else { ka + kb };
                    Linearized::Form(terms, k)
                }
                ("-", [a]) => match self.linearize(a, atom)? {
                    Linearized::Form(t, k) => Linearized::Form(negate_terms(t), -k),
                    s => s,
                },
                ("*", [a, b]) => {
                    let (la, lb) = (self.linearize(a, atom)?, self.linearize(b, atom)?);
                    let (Linearized::Form(ta, ka), Linearized::Form(tb, kb)) = (la, lb) else {
                        return Ok(Linearized::HasSym);
                    };
                    if ta.is_empty() {
                        Linearized::Form(scale_terms(tb, &ka), kb * ka)
                    } else if tb.is_empty() {
                        Linearized::Form(scale_terms(ta, &kb), ka * kb)
                    } else {
                        return Err(unsupported());
                    }
                }
                ("/", [a, b]) => {
                    let (la, lb) = (self.linearize(a, atom)?, self.linearize(b, atom)?);
                    let (Linearized::Form(ta, ka), Linearized::Form(tb, kb)) = (la, lb) else {
                        return Ok(Linearized::HasSym);
                    };
                    if !tb.is_empty() || kb.is_zero() {
                        return Err(unsupported());
                    }
                    let inv = BigRational::from_integer(1.into()) / kb;
                    Linearized::Form(scale_terms(ta, &inv), ka * inv)
                }
                _ => return Err(unsupported()),
            },
        })
    }

    fn union(&mut self, x: &Var, y: &Var) -> Result<(), SolverError> {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return Ok(());
        }
        let (rep, other) = if rx < ry { (rx, ry) } else { (ry, rx) };
        self.parent.insert(other.clone(), rep.clone());
        match (self.sym.get(&rep).cloned(), self.sym.remove(&other)) {
            (Some(a), Some(b)) if a != b => {
                self.set_bottom();
                return Ok(());
            }
            (None, Some(b)) => {
                self.sym.insert(rep.clone(), b);
            }
            _ => {}
        }
        let merged_ids = match (self.index.get(&rep).cloned(), self.index.remove(&other)) {
            (Some(mut a), Some(b)) => {
                a.append(b);
                Some(a)
            }
            (a, b) => a.or(b),
        };
        if let Some(ids) = merged_ids {
            self.index.insert(rep.clone(), ids);
        }
        if self.sym.contains_key(&rep) && self.is_numeric(&rep) {
            self.set_bottom();
            return Ok(());
        }
        match (self.witness.get(&rep).cloned(), self.witness.remove(&other)) {
            (Some(a), Some(b)) if a != b => self.repair(BTreeSet::from([rep]))?,
            (None, Some(b)) => {
                self.witness.insert(rep, b);
            }
            _ => {}
        }
        Ok(())
    }

    fn bind_sym(&mut self, x: &Var, s: &Arc<str>) {
        let r = self.find(x);
        if self.is_numeric(&r) {
            self.set_bottom();
            return;
        }
        match self.sym.get(&r) {
            Some(t) if t == s => {}
            Some(_) => self.set_bottom(),
            None => {
                self.sym.insert(r, s.clone());
            }
        }
    }

    fn insert_row(&mut self, row: Row) -> Result<(), SolverError> {
        let row = match row.normalized() {
            solve::Norm::Keep(r) => r,
            solve::Norm::Tauto => return Ok(()),
            solve::Norm::Contra => {
                self.set_bottom();
                return Ok(());
            }
        };
        for v in row.terms.keys() {
            if self.sym.contains_key(&self.find(v)) {
                // rational constraint on a tree-valued variable
                self.set_bottom();
                return Ok(());
            }
        }
        let id = self.atoms.len();
        self.atoms.push_back(Arc::new(row.clone()));
        for v in row.terms.keys() {
            let rep = self.find(v);
            let mut ids = self.index.get(&rep).cloned().unwrap_or_default();
            ids.push_back(id);
            self.index.insert(rep, ids);
        }
        // extend the witness over variables the store has not seen:
        // fix all but one at zero, solve the last to satisfy the atom
        let resolved = self.resolve_row(&row);
        let missing: Vec<Var> = resolved
            .terms
            .keys()
            .filter(|v| !self.witness.contains_key(*v))
            .cloned()
            .collect();
        if !missing.is_empty() {
            for v in &missing[..missing.len() - 1] {
                self.witness.insert(v.clone(), BigRational::zero());
            }
            let last = &missing[missing.len() - 1];
            let coef = resolved.terms[last].clone();
            let mut rest = BigRational::zero();
            for (v, c) in &resolved.terms {
                if v != last {
                    rest += c * self.witness.get(v).expect("witness covers seen vars");
                }
            }
            let exact = (&resolved.rhs - rest) / &coef;
            let value = match resolved.rel {
                LinRel::Eq | LinRel::Le => exact,
                LinRel::Lt => {
                    let one = BigRational::from_integer(1.into());
                    if coef.is_positive() {
                        exact - one
                    } else {
                        exact + one
                    }
                }
            };
            self.witness.insert(last.clone(), value);
            debug_assert_eq!(self.eval_resolved(&resolved), Some(true));
            return Ok(());
        }
        if self.eval_resolved(&resolved) != Some(true) {
            self.repair(resolved.terms.keys().cloned().collect())?;
        }
        Ok(())
    }

    /// The row with variables mapped to current representatives
    /// (coefficients of merged variables collapse together).
    fn resolve_row(&self, row: &Row) -> Row {
        let mut terms: BTreeMap<Var, BigRational> = BTreeMap::new();
        for (v, c) in &row.terms {
            let rep = self.find(v);
            let cur = terms.remove(&rep).unwrap_or_else(BigRational::zero);
            let next = cur + c;
            if !next.is_zero() {
                terms.insert(rep, next);
            }
        }
        Row {
            terms,
            rel: row.rel,
            rhs: row.rhs.clone(),
        }
    }

    fn eval_resolved(&self, row: &Row) -> Option<bool> {
        let mut val = BTreeMap::new();
        for v in row.terms.keys() {
            val.insert(v.clone(), self.witness.get(v)?.clone());
        }
        row.evaluate(&val)
    }

    /// Re-solves the atoms touching `region`, treating variables outside
    /// it as fixed at their witness values; grows the region when the
    /// restricted system is unsatisfiable. Reaching a fixpoint region
    /// that still fails means the store itself is inconsistent.
    fn repair(&mut self, mut region: BTreeSet<Var>) -> Result<(), SolverError> {
        loop {
            let mut ids: BTreeSet<usize> = BTreeSet::new();
            for r in &region {
                if let Some(list) = self.index.get(r) {
                    ids.extend(list.iter().copied());
                }
            }
            let rows: Vec<Row> = ids
                .iter()
                .map(|id| self.resolve_row(&self.atoms[*id]))
                .collect();
            let mut touched: BTreeSet<Var> = region.clone();
            for r in &rows {
                touched.extend(r.terms.keys().cloned());
            }
            // fix the boundary at its current witness values
            let fixed: Vec<Row> = rows
                .iter()
                .map(|r| {
                    let mut terms = BTreeMap::new();
                    let mut rhs = r.rhs.clone();
                    for (v, c) in &r.terms {
                        if region.contains(v) {
                            terms.insert(v.clone(), c.clone());
                        } else {
                            rhs -= c * self.witness.get(v).expect("boundary has witnesses");
                        }
                    }
                    Row {
                        terms,
                        rel: r.rel,
                        rhs,
                    }
                })
                .collect();
            match solve(fixed, ELIM_CAP)? {
                Some(model) => {
                    for (v, value) in model {
                        self.witness.insert(v, value);
                    }
                    // region vars not mentioned by any surviving atom
                    // keep whatever value they had
                    return Ok(());
                }
                None => {
                    if touched == region {
                        self.set_bottom();
                        return Ok(());
                    }
                    region = touched;
                }
            }
        }
    }

    pub fn conjoin(&self, other: &LinStore) -> Result<LinStore, SolverError> {
        if self.inconsistent || other.inconsistent {
            return Ok(LinStore::bottom());
        }
        let mut acc = self.clone();
        for (child, p) in other.parent.iter() {
            acc.union(child, p)?;
            if acc.inconsistent {
                return Ok(acc);
            }
        }
        for (v, s) in other.sym.iter() {
            acc.bind_sym(v, s);
            if acc.inconsistent {
                return Ok(acc);
            }
        }
        for row in other.atoms.iter() {
            acc.insert_row(Row::clone(row))?;
            if acc.inconsistent {
                return Ok(acc);
            }
        }
        Ok(acc)
    }

    /// All atoms resolved to current representatives.
    fn resolved_rows(&self) -> Vec<Row> {
        self.atoms.iter().map(|a| self.resolve_row(a)).collect()
    }

    pub fn entails(&self, other: &LinStore) -> bool {
        self.try_entails(other)
            .expect("elimination cap exceeded during entailment")
    }

    pub fn try_entails(&self, other: &LinStore) -> Result<bool, SolverError> {
        if self.inconsistent {
            return Ok(true);
        }
        if other.inconsistent {
            return Ok(false);
        }
        let base = self.resolved_rows();
        for (child, _) in other.parent.iter() {
            let rep = other.find(child);
            if !self.same_value(child, &rep, &base)? {
                return Ok(false);
            }
        }
        for (v, s) in other.sym.iter() {
            if self.sym.get(&self.find(v)) != Some(s) {
                return Ok(false);
            }
        }
        for atom in other.atoms.iter() {
            let row = self.resolve_row(atom);
            if row
                .terms
                .keys()
                .any(|v| self.sym.contains_key(v))
            {
                return Ok(false);
            }
            if !self.row_entailed(&base, &row)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn row_entailed(&self, base: &[Row], row: &Row) -> Result<bool, SolverError> {
        match row.clone().normalized() {
            solve::Norm::Tauto => return Ok(true),
            solve::Norm::Contra => return Ok(false),
            solve::Norm::Keep(_) => {}
        }
        let entailed_half = |half: Row| -> Result<bool, SolverError> {
            let mut test = base.to_vec();
            test.push(half.negated());
            is_unsat(test, ELIM_CAP)
        };
        match row.rel {
            LinRel::Eq => {
                let le = Row {
                    terms: row.terms.clone(),
                    rel: LinRel::Le,
                    rhs: row.rhs.clone(),
                };
                let ge = Row {
                    terms: negate_terms(row.terms.clone()),
                    rel: LinRel::Le,
                    rhs: -row.rhs.clone(),
                };
                Ok(entailed_half(le)? && entailed_half(ge)?)
            }
            _ => entailed_half(row.clone()),
        }
    }

    /// Both sides equal in every solution: same class, same symbol, or
    /// the linear part pins their difference to zero.
    fn same_value(&self, x: &Var, y: &Var, base: &[Row]) -> Result<bool, SolverError> {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return Ok(true);
        }
        match (self.sym.get(&rx), self.sym.get(&ry)) {
            (Some(a), Some(b)) => return Ok(a == b),
            (Some(_), None) | (None, Some(_)) => return Ok(false),
            (None, None) => {}
        }
        let mut terms = BTreeMap::new();
        terms.insert(rx, BigRational::from_integer(1.into()));
        terms.insert(ry, BigRational::from_integer((-1).into()));
        self.row_entailed(
            base,
            &Row {
                terms,
                rel: LinRel::Eq,
                rhs: BigRational::zero(),
            },
        )
    }

    /// Existential projection: keeps aliases/symbols/linear consequences
    /// on `keep`, eliminating everything else exactly. The witness of the
    /// result is the restriction of the current witness.
    pub fn project(&self, keep: &VarSet) -> Result<LinStore, SolverError> {
        if self.inconsistent {
            return Ok(LinStore::bottom());
        }
        let mut classes: BTreeMap<Var, Vec<Var>> = BTreeMap::new();
        for (child, _) in self.parent.iter() {
            classes
                .entry(self.find(child))
                .or_default()
                .push(child.clone());
        }
        let mut out = LinStore::top();
        // map each representative to its kept stand-in
        let mut rewrite: BTreeMap<Var, Var> = BTreeMap::new();
        for (rep, members) in &classes {
            let mut kept: Vec<&Var> = members
                .iter()
                .chain(std::iter::once(rep))
                .filter(|m| keep.contains(*m))
                .collect();
            kept.sort();
            let Some(first) = kept.first() else { continue };
            rewrite.insert(rep.clone(), (*first).clone());
            for m in kept.iter().skip(1) {
                out.parent.insert((*m).clone(), (*first).clone());
            }
        }
        for (rep, s) in self.sym.iter() {
            match rewrite.get(rep) {
                Some(krep) => {
                    out.sym.insert(krep.clone(), s.clone());
                }
                None if keep.contains(rep) => {
                    out.sym.insert(rep.clone(), s.clone());
                }
                None => {}
            }
        }
        let rows: Vec<Row> = self
            .resolved_rows()
            .into_iter()
            .map(|r| {
                let terms = r
                    .terms
                    .into_iter()
                    .map(|(v, c)| (rewrite.get(&v).cloned().unwrap_or(v), c))
                    .collect();
                Row {
                    terms,
                    rel: r.rel,
                    rhs: r.rhs,
                }
            })
            .collect();
        let reduced = match eliminate(rows, &|v| !keep.contains(v), ELIM_CAP)? {
            Reduced::Rows(rs) => rs,
            Reduced::Unsat => unreachable!("projection of a consistent store"),
        };
        for row in reduced {
            let id = out.atoms.len();
            for v in row.terms.keys() {
                let mut ids = out.index.get(v).cloned().unwrap_or_default();
                ids.push_back(id);
                out.index.insert(v.clone(), ids);
                // restriction of a model is a model of the projection
                if !out.witness.contains_key(v) {
                    let source = rewrite
                        .iter()
                        .find_map(|(rep, krep)| (krep == v).then_some(rep))
                        .cloned()
                        .unwrap_or_else(|| v.clone());
                    let w = self
                        .witness
                        .get(&source)
                        .expect("projected variable had a witness")
                        .clone();
                    out.witness.insert(v.clone(), w);
                }
            }
            out.atoms.push_back(Arc::new(row));
        }
        Ok(out)
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> LinStore {
        let ren = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
        LinStore {
            inconsistent: self.inconsistent,
            atoms: self
                .atoms
                .iter()
                .map(|a| {
                    Arc::new(Row {
                        terms: a.terms.iter().map(|(v, c)| (ren(v), c.clone())).collect(),
                        rel: a.rel,
                        rhs: a.rhs.clone(),
                    })
                })
                .collect(),
            parent: self
                .parent
                .iter()
                .map(|(c, p)| (ren(c), ren(p)))
                .collect(),
            sym: self.sym.iter().map(|(v, s)| (ren(v), s.clone())).collect(),
            index: self
                .index
                .iter()
                .map(|(v, ids)| (ren(v), ids.clone()))
                .collect(),
            witness: self
                .witness
                .iter()
                .map(|(v, w)| (ren(v), w.clone()))
                .collect(),
        }
    }

    pub fn vars(&self) -> VarSet {
        let mut out = VarSet::new();
        for (c, p) in self.parent.iter() {
            out.insert(c.clone());
            out.insert(p.clone());
        }
        for (v, _) in self.sym.iter() {
            out.insert(v.clone());
        }
        for a in self.atoms.iter() {
            out.extend(a.terms.keys().cloned());
        }
        out
    }

    pub(crate) fn canonical(&self) -> CanonLin {
        debug_assert!(!self.inconsistent);
        let aliases: Vec<(Var, Var)> = self
            .parent
            .iter()
            .map(|(c, _)| (c.clone(), self.find(c)))
            .collect();
        let syms: Vec<(Var, Arc<str>)> = self
            .sym
            .iter()
            .map(|(v, s)| (self.find(v), s.clone()))
            .collect();
        canonicalize(aliases, syms, self.resolved_rows(), ELIM_CAP)
            .expect("elimination cap exceeded during canonicalization")
    }

    pub fn render_atoms(&self) -> Vec<String> {
        self.canonical().render_atoms()
    }

    pub fn satisfies(&self, val: &Valuation) -> Option<bool> {
        if self.inconsistent {
            return Some(false);
        }
        for (child, _) in self.parent.iter() {
            let rep = self.find(child);
            match (val.get(child), val.get(&rep)) {
                (Some(a), Some(b)) => {
                    if a != b {
                        return Some(false);
                    }
                }
                _ => return None,
            }
        }
        for (v, s) in self.sym.iter() {
            match val.get(v) {
                Some(Value::Tree(Term::Sym(t))) => {
                    if t != s {
                        return Some(false);
                    }
                }
                Some(_) => return Some(false),
                None => return None,
            }
        }
        for a in self.atoms.iter() {
            let mut m = BTreeMap::new();
            for v in a.terms.keys() {
                match val.get(v) {
                    Some(Value::Rat(r)) => {
                        m.insert(v.clone(), r.clone());
                    }
                    // a tree value can never satisfy an arithmetic atom
                    Some(_) => return Some(false),
                    None => return None,
                }
            }
            if a.evaluate(&m) != Some(true) {
                return Some(false);
            }
        }
        Some(true)
    }

    /// Witness value of `v` in the cached model, if numerically
    /// constrained. The sampling projection uses this.
    pub fn witness_of(&self, v: &Var) -> Option<BigRational> {
        self.witness.get(&self.find(v)).cloned()
    }

    /// The symbol `v` is bound to, if any.
    pub fn sym_value(&self, v: &Var) -> Option<Arc<str>> {
        self.sym.get(&self.find(v)).cloned()
    }

    /// The exact rational `v` is pinned to, if the store determines it.
    pub fn point_value(&self, v: &Var) -> Option<BigRational> {
        if self.inconsistent {
            return None;
        }
        self.canonical().interval_of(&self.find(v)).0
    }

    /// `(point, lower, upper)` bounds for `v` from the canonical view.
    #[allow(clippy::type_complexity)]
    pub fn interval_of(
        &self,
        v: &Var,
    ) -> (
        Option<BigRational>,
        Option<(BigRational, bool)>,
        Option<(BigRational, bool)>,
    ) {
        if self.inconsistent {
            return (None, None, None);
        }
        self.canonical().interval_of(&self.find(v))
    }

    /// Keeps only the canonical atoms (aliases, symbol bindings, rows)
    /// whose variables all lie in `keep`; every other atom is dropped.
    pub fn drop_atoms_outside(&self, keep: &VarSet) -> Result<LinStore, SolverError> {
        if self.inconsistent {
            return Ok(LinStore::bottom());
        }
        let canon = self.canonical();
        let mut out = LinStore::top();
        for (member, rep) in &canon.aliases {
            if keep.contains(member) && keep.contains(rep) {
                out.union(member, rep)?;
            }
        }
        for (v, s) in &canon.syms {
            if keep.contains(v) {
                out.bind_sym(v, s);
            }
        }
        for row in canon.eqs.iter().chain(&canon.ineqs) {
            if row.terms.keys().all(|v| keep.contains(v)) {
                out.insert_row(row.clone())?;
            }
        }
        Ok(out)
    }
}

fn negate_terms(terms: BTreeMap<Var, BigRational>) -> BTreeMap<Var, BigRational> {
    terms.into_iter().map(|(v, c)| (v, -c)).collect()
}

fn scale_terms(
    terms: BTreeMap<Var, BigRational>,
    k: &BigRational,
) -> BTreeMap<Var, BigRational> {
    if k.is_zero() {
        return BTreeMap::new();
    }
    terms.into_iter().map(|(v, c)| (v, c * k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_query;
    use crate::store::Store;

    fn conj(src: &str) -> LinStore {
        // parse `{...}` groups through the query grammar for brevity
        let q = parse_query(&format!("?- {src}, goal.")).expect("test constraint parses");
        let mut s = LinStore::top();
        for atom in &q.constraints {
            s = s.conjoin_atom(atom).unwrap();
        }
        s
    }

    fn keep(names: &[&str]) -> VarSet {
        names.iter().map(|n| Var::named(n)).collect()
    }

    #[test]
    fn rendering_is_canonical() {
        let s = conj("{D = 50 + D2, D2 > 75, D2 < 85}");
        assert_eq!(
            s.render_atoms(),
            vec![
                "D = D2 + 50".to_string(),
                "D2 < 85".to_string(),
                "D2 > 75".to_string(),
            ]
        );
    }

    #[test]
    fn projection_eliminates_exactly() {
        // the window on D2 shifts onto D
        let s = conj("{D < 150, D = 50 + D2, D2 > 75, D2 < 85}");
        let p = s.project(&keep(&["D"])).unwrap();
        assert_eq!(
            p.render_atoms(),
            vec!["D < 135".to_string(), "D > 125".to_string()]
        );
    }

    #[test]
    fn inconsistency_is_detected_via_witness_repair() {
        let s = conj("{D < 150, D = 50 + D2, D2 = 110}");
        assert!(!s.is_consistent());
        assert_eq!(Store::Lin(s).render(), "false");
        let t = conj("{X > 0, X < 1/2, Y = X + 1, Y > 1, Y < 3/2}");
        assert!(t.is_consistent());
    }

    #[test]
    fn entailment_answers_follow_bound_tightness() {
        let tight = conj("{D > 125, D < 135}");
        let loose = conj("{D > 100, D < 150}");
        assert!(tight.entails(&loose));
        assert!(!loose.entails(&tight));
        // a pinned value entails a window but not the reverse
        let pin = conj("{D = 130}");
        assert!(pin.entails(&tight));
        assert!(!tight.entails(&pin));
        let wrong = conj("{D = 100}");
        assert!(!wrong.entails(&tight));
    }

    #[test]
    fn aliases_stay_sort_neutral() {
        let s = conj("{X = Y}").conjoin_atom(&ConstraintAtom::eq(
            Term::Var(Var::named("X")),
            Term::sym("a"),
        ))
        .unwrap();
        assert!(s.is_consistent());
        assert_eq!(
            s.render_atoms(),
            vec!["X = a".to_string(), "Y = X".to_string()]
        );
        // arithmetic forces the rational sort
        let t = conj("{X + 0 = Y}").conjoin_atom(&ConstraintAtom::eq(
            Term::Var(Var::named("X")),
            Term::sym("a"),
        ))
        .unwrap();
        assert!(!t.is_consistent());
    }

    #[test]
    fn symbol_equations_propagate_through_classes() {
        let s = conj("{X = Y}").conjoin_atom(&ConstraintAtom::eq(
            Term::sym("a"),
            Term::Var(Var::named("Y")),
        ))
        .unwrap();
        let t = conj("{X = Y}")
            .conjoin_atom(&ConstraintAtom::eq(
                Term::Var(Var::named("X")),
                Term::sym("a"),
            ))
            .unwrap()
            .conjoin_atom(&ConstraintAtom::eq(
                Term::Var(Var::named("Y")),
                Term::sym("b"),
            ))
            .unwrap();
        assert!(s.is_consistent());
        assert!(!t.is_consistent());
    }

    #[test]
    fn entailment_covers_aliases_and_symbols() {
        let c0 = conj("{X = 3, Y = 3}");
        let alias = conj("{X = Y}");
        assert!(c0.entails(&alias));
        assert!(!alias.entails(&c0));
        let syms = conj("{X = Y}").conjoin_atom(&ConstraintAtom::eq(
            Term::Var(Var::named("Y")),
            Term::sym("a"),
        ))
        .unwrap();
        let just_x = LinStore::top()
            .conjoin_atom(&ConstraintAtom::eq(
                Term::Var(Var::named("X")),
                Term::sym("a"),
            ))
            .unwrap();
        assert!(syms.entails(&just_x));
        assert!(!just_x.entails(&syms));
    }

    #[test]
    fn projection_keeps_kept_aliases_and_symbols() {
        let s = conj("{X = Y, Y = Z}").conjoin_atom(&ConstraintAtom::eq(
            Term::Var(Var::named("Z")),
            Term::sym("a"),
        ))
        .unwrap();
        let p = s.project(&keep(&["Y", "Z"])).unwrap();
        assert_eq!(
            p.render_atoms(),
            vec!["Y = a".to_string(), "Z = Y".to_string()]
        );
    }

    #[test]
    fn fractional_arithmetic_stays_exact() {
        let s = conj("{X = 1/3, Y = X + 1/6}");
        assert_eq!(
            s.point_value(&Var::named("Y")),
            Some(BigRational::new(1.into(), 2.into()))
        );
    }

    #[test]
    fn division_and_products_linearize_or_fail() {
        let s = conj("{Y = 3*X, Y = 6}");
        assert_eq!(
            s.point_value(&Var::named("X")),
            Some(BigRational::from_integer(2.into()))
        );
        let err = LinStore::top()
            .conjoin_atom(&ConstraintAtom::eq(
                Term::Var(Var::named("X")),
                Term::app("*", vec![Term::Var(Var::named("Y")), Term::Var(Var::named("Z"))]),
            ))
            .unwrap_err();
        assert!(matches!(err, SolverError::UnsupportedTerm { .. }));
        let tree = LinStore::top()
            .conjoin_atom(&ConstraintAtom::eq(
                Term::Var(Var::named("X")),
                Term::app("f", vec![Term::sym("a")]),
            ))
            .unwrap_err();
        assert!(matches!(tree, SolverError::UnsupportedTerm { .. }));
    }

    #[test]
    fn witness_tracks_the_store() {
        let s = conj("{X > 10, Y = X + 5, Y < 20}");
        let wx = s.witness_of(&Var::named("X")).unwrap();
        let wy = s.witness_of(&Var::named("Y")).unwrap();
        assert!(wx > BigRational::from_integer(10.into()));
        assert_eq!(wy, wx + BigRational::from_integer(5.into()));
    }

    #[test]
    fn satisfies_evaluates_valuations() {
        let s = conj("{X > 0, Y = X + 1}");
        let mut val = Valuation::new();
        val.insert(Var::named("X"), Value::Rat(BigRational::from_integer(2.into())));
        val.insert(Var::named("Y"), Value::Rat(BigRational::from_integer(3.into())));
        assert_eq!(s.satisfies(&val), Some(true));
        val.insert(Var::named("Y"), Value::Rat(BigRational::from_integer(4.into())));
        assert_eq!(s.satisfies(&val), Some(false));
        val.remove(&Var::named("Y"));
        assert_eq!(s.satisfies(&val), None);
    }
}
