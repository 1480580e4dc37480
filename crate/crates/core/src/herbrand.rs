//! Equality constraints over finite trees (the Herbrand domain).
//!
//! A consistent store is kept as a triangular substitution: bindings may
//! reference other bound variables and are resolved by chasing. The
//! canonical view flattens it into an idempotent solved form with
//! variable-variable bindings oriented larger-to-smaller and existential
//! witnesses renumbered by first occurrence. Projection onto a variable
//! set replaces the remaining variables with shared witnesses, so
//! `project({X = f(Z)}, {X})` is `X = f(_E0)`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::lang::{App, ConstraintAtom, DomainTag, RelOp, Term, Var};
use crate::store::{SolverError, Valuation, Value, VarSet};

#[derive(Clone, Debug)]
pub struct HerbrandStore {
    inconsistent: bool,
    bind: im::OrdMap<Var, Term>,
}

/// Flattened solved form: sorted idempotent bindings, canonical witness
/// numbering. Two stores are equivalent iff their canonical forms match.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CanonH {
    pub bind: Vec<(Var, Term)>,
}

impl HerbrandStore {
    pub fn top() -> HerbrandStore {
        HerbrandStore {
            inconsistent: false,
            bind: im::OrdMap::new(),
        }
    }

    pub fn bottom() -> HerbrandStore {
        HerbrandStore {
            inconsistent: true,
            bind: im::OrdMap::new(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    /// One chase step repeated: follows variable bindings until an
    /// unbound variable or a non-variable term.
    fn walk(&self, t: &Term) -> Term {
        let mut cur = t.clone();
        while let Term::Var(v) = &cur {
            match self.bind.get(v) {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }

    /// `v` occurs in `t` after resolution. Iterative: runs build deep
    /// term chains whose depth must not hit the call stack.
    fn occurs(&self, v: &Var, t: &Term) -> bool {
        let mut work = vec![t.clone()];
        while let Some(t) = work.pop() {
            if t.is_ground() {
                continue;
            }
            match self.walk(&t) {
                Term::Var(u) => {
                    if &u == v {
                        return true;
                    }
                }
                Term::Sym(_) | Term::Rat(_) => {}
                Term::App(app) => {
                    if !app.is_ground() {
                        work.extend(app.args.iter().cloned());
                    }
                }
            }
        }
        false
    }

    /// Iterative for the same reason as `occurs`; shared subtrees are
    /// recognized by pointer so self-unification of deep terms is cheap.
    fn unify(&mut self, t1: &Term, t2: &Term) -> bool {
        let mut work = vec![(t1.clone(), t2.clone())];
        while let Some((t1, t2)) = work.pop() {
            if let (Term::App(x), Term::App(y)) = (&t1, &t2) {
                if Arc::ptr_eq(x, y) {
                    continue;
                }
            }
            let a = self.walk(&t1);
            let b = self.walk(&t2);
            match (&a, &b) {
                (Term::Var(x), Term::Var(y)) => {
                    if x != y {
                        // larger-to-smaller keeps witnesses out of the
                        // left-hand side whenever an ordinary variable is
                        // available (Named < Fresh < Exists)
                        let (from, to) = if x > y { (x, y) } else { (y, x) };
                        self.bind.insert(from.clone(), Term::Var(to.clone()));
                    }
                }
                (Term::Var(x), t) | (t, Term::Var(x)) => {
                    if self.occurs(x, t) {
                        return false;
                    }
                    self.bind.insert(x.clone(), t.clone());
                }
                (Term::Sym(s), Term::Sym(t)) => {
                    if s != t {
                        return false;
                    }
                }
                (Term::Rat(r), Term::Rat(s)) => {
                    if r != s {
                        return false;
                    }
                }
                (Term::App(f), Term::App(g)) => {
                    if Arc::ptr_eq(f, g) {
                        continue;
                    }
                    if f.functor != g.functor || f.args.len() != g.args.len() {
                        return false;
                    }
                    // unequal fingerprints of ground terms decide disequality
                    if f.is_ground()
                        && g.is_ground()
                        && (f.size() != g.size() || a.cached_hash() != b.cached_hash())
                    {
                        return false;
                    }
                    for (x, y) in f.args.iter().zip(&g.args) {
                        work.push((x.clone(), y.clone()));
                    }
                }
                _ => return false,
            }
        }
        true
    }

    pub fn conjoin_atom(&self, atom: &ConstraintAtom) -> Result<HerbrandStore, SolverError> {
        if atom.op != RelOp::Eq {
            return Err(SolverError::UnsupportedTerm {
                domain: DomainTag::Herbrand,
                term: atom.to_string(),
            });
        }
        if self.inconsistent {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        if next.unify(&atom.lhs, &atom.rhs) {
            Ok(next)
        } else {
            Ok(HerbrandStore::bottom())
        }
    }

    pub fn conjoin(&self, other: &HerbrandStore) -> Result<HerbrandStore, SolverError> {
        if self.inconsistent || other.inconsistent {
            return Ok(HerbrandStore::bottom());
        }
        let mut acc = self.clone();
        for (v, t) in other.bind.iter() {
            if !acc.unify(&Term::Var(v.clone()), t) {
                return Ok(HerbrandStore::bottom());
            }
        }
        Ok(acc)
    }

    /// Fully applies the substitution to `t`, sharing work across
    /// repeated variables through `memo`. Ground subterms are returned
    /// as-is, so deep shared structures resolve in constant time.
    fn resolve(&self, t: &Term, memo: &mut HashMap<Var, Term>) -> Term {
        if t.is_ground() {
            return t.clone();
        }
        match t {
            Term::Var(v) => {
                if let Some(r) = memo.get(v) {
                    return r.clone();
                }
                let r = match self.bind.get(v) {
                    Some(inner) => self.resolve(&inner.clone(), memo),
                    None => t.clone(),
                };
                memo.insert(v.clone(), r.clone());
                r
            }
            Term::Sym(_) | Term::Rat(_) => t.clone(),
            Term::App(app) => {
                let args = app.args.iter().map(|a| self.resolve(a, memo)).collect();
                Term::App(Arc::new(App::new(app.functor.clone(), args)))
            }
        }
    }

    /// Canonical solved form. Alias classes pick their smallest member
    /// as representative; witness-headed bindings are dropped (they are
    /// existentially quantified); witnesses are renumbered by first
    /// occurrence over the sorted bindings.
    pub fn canonical(&self) -> CanonH {
        if self.inconsistent {
            return CanonH { bind: Vec::new() };
        }
        let mut memo = HashMap::new();
        // partition bound variables into alias classes (resolve to an
        // unbound end variable) and structural bindings
        let mut classes: BTreeMap<Var, Vec<Var>> = BTreeMap::new();
        let mut structural: Vec<(Var, Term)> = Vec::new();
        for (v, _) in self.bind.iter() {
            let r = self.resolve(&Term::Var(v.clone()), &mut memo);
            match r {
                Term::Var(end) => classes.entry(end).or_default().push(v.clone()),
                t => structural.push((v.clone(), t)),
            }
        }
        let mut rep_of: BTreeMap<Var, Var> = BTreeMap::new();
        let mut out: Vec<(Var, Term)> = Vec::new();
        for (end, mut members) in classes {
            members.push(end);
            members.sort();
            let rep = members[0].clone();
            for m in &members {
                rep_of.insert(m.clone(), rep.clone());
            }
            for m in members.into_iter().skip(1) {
                if !m.is_witness() {
                    out.push((m, Term::Var(rep.clone())));
                }
            }
        }
        for (v, t) in structural {
            if !v.is_witness() {
                out.push((v, rewrite_vars(&t, &rep_of)));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        // canonical witness ids, by first occurrence over sorted bindings
        let mut wmap: BTreeMap<Var, Var> = BTreeMap::new();
        for (_, t) in &mut out {
            *t = renumber_witnesses(t, &mut wmap);
        }
        CanonH { bind: out }
    }

    pub fn render_atoms(&self) -> Vec<String> {
        let mut atoms: Vec<String> = self
            .canonical()
            .bind
            .into_iter()
            .map(|(v, t)| format!("{v} = {t}"))
            .collect();
        atoms.sort();
        atoms
    }

    /// Existential projection: keeps constraints on `keep`, abstracting
    /// every other variable into a shared witness (or into a kept alias
    /// when one exists).
    pub fn project(&self, keep: &VarSet) -> HerbrandStore {
        if self.inconsistent {
            return HerbrandStore::bottom();
        }
        let canon = self.canonical();
        // alias classes over the canonical form: end variable -> members
        let mut classes: BTreeMap<Var, Vec<Var>> = BTreeMap::new();
        let mut structural: Vec<(Var, Term)> = Vec::new();
        for (v, t) in &canon.bind {
            match t {
                Term::Var(end) => classes.entry(end.clone()).or_default().push(v.clone()),
                _ => structural.push((v.clone(), t.clone())),
            }
        }
        let mut next_witness = 0u64;
        let mut fresh: BTreeMap<Var, Var> = BTreeMap::new();
        // map each class end-variable to its kept representative, or a
        // fresh witness if the class has no kept member
        let mut out = im::OrdMap::new();
        let mut target_of: BTreeMap<Var, Term> = BTreeMap::new();
        for (end, members) in &classes {
            let mut kept: Vec<&Var> = members
                .iter()
                .chain(std::iter::once(end))
                .filter(|m| keep.contains(*m))
                .collect();
            kept.sort();
            if let Some(rep) = kept.first() {
                target_of.insert(end.clone(), Term::Var((*rep).clone()));
                for m in kept.iter().skip(1) {
                    out.insert((*m).clone(), Term::Var((*rep).clone()));
                }
            }
        }
        let abstracted = |v: &Var,
                          fresh: &mut BTreeMap<Var, Var>,
                          next_witness: &mut u64| {
            Term::Var(
                fresh
                    .entry(v.clone())
                    .or_insert_with(|| {
                        let w = Var::Exists(*next_witness);
                        *next_witness += 1;
                        w
                    })
                    .clone(),
            )
        };
        for (v, t) in structural {
            if !keep.contains(&v) {
                continue;
            }
            let rewritten = rewrite_with(&t, &mut |u| match target_of.get(u) {
                Some(tgt) => tgt.clone(),
                None => {
                    if keep.contains(u) {
                        Term::Var(u.clone())
                    } else {
                        abstracted(u, &mut fresh, &mut next_witness)
                    }
                }
            });
            out.insert(v, rewritten);
        }
        HerbrandStore {
            inconsistent: false,
            bind: out,
        }
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> HerbrandStore {
        let ren = |v: &Var| map.get(v).cloned().unwrap_or_else(|| v.clone());
        let mut out = im::OrdMap::new();
        for (v, t) in self.bind.iter() {
            out.insert(ren(v), rewrite_with(t, &mut |u| Term::Var(ren(u))));
        }
        HerbrandStore {
            inconsistent: self.inconsistent,
            bind: out,
        }
    }

    /// `self ⊑ other`: one-way matching of the canonical form of `other`
    /// against this store. Witnesses of `other` act as wildcards bound
    /// consistently; everything else must match exactly.
    pub fn entails(&self, other: &HerbrandStore) -> bool {
        if self.inconsistent {
            return true;
        }
        if other.inconsistent {
            return false;
        }
        let mut memo = HashMap::new();
        // keep the two stores' witness spaces apart
        let offset = self.max_witness_id().max(other.max_witness_id()) + 1;
        let mut theta: BTreeMap<Var, Term> = BTreeMap::new();
        for (v, t) in other.canonical().bind {
            let subject = self.resolve(&Term::Var(v), &mut memo);
            let pattern = shift_witnesses(&t, offset);
            if !self.matches(&pattern, &subject, &mut theta, &mut memo) {
                return false;
            }
        }
        true
    }

    fn max_witness_id(&self) -> u64 {
        fn scan(t: &Term, m: &mut u64) {
            match t {
                Term::Var(Var::Exists(n)) => *m = (*m).max(*n + 1),
                // ground subtrees hold no witnesses
                Term::App(app) if !app.is_ground() => {
                    app.args.iter().for_each(|a| scan(a, m));
                }
                _ => {}
            }
        }
        let mut m = 0;
        for (v, t) in self.bind.iter() {
            if let Var::Exists(n) = v {
                m = m.max(*n + 1);
            }
            scan(t, &mut m);
        }
        m
    }

    /// Matches `pattern` (whose shifted witnesses are flexible) against
    /// `subject` (rigid, already resolved through this store).
    fn matches(
        &self,
        pattern: &Term,
        subject: &Term,
        theta: &mut BTreeMap<Var, Term>,
        memo: &mut HashMap<Var, Term>,
    ) -> bool {
        match pattern {
            Term::Var(w) if w.is_witness() => match theta.get(w) {
                Some(bound) => bound == subject,
                None => {
                    theta.insert(w.clone(), subject.clone());
                    true
                }
            },
            Term::Var(x) => &self.resolve(&Term::Var(x.clone()), memo) == subject,
            Term::Sym(_) | Term::Rat(_) => pattern == subject,
            Term::App(p) => match subject {
                Term::App(s) => {
                    if Arc::ptr_eq(p, s) {
                        return true;
                    }
                    // ground pattern has no flexible parts: plain equality,
                    // which shortcuts on fingerprints and shared pointers
                    if p.is_ground() {
                        return p == s;
                    }
                    p.functor == s.functor
                        && p.args.len() == s.args.len()
                        && p.args
                            .iter()
                            .zip(&s.args)
                            .all(|(pa, sa)| self.matches(pa, sa, theta, memo))
                }
                _ => false,
            },
        }
    }

    pub fn vars(&self) -> VarSet {
        let mut out = VarSet::new();
        for (v, t) in self.bind.iter() {
            if !v.is_witness() {
                out.insert(v.clone());
            }
            for u in t.vars() {
                if !u.is_witness() {
                    out.insert(u);
                }
            }
        }
        out
    }

    pub fn satisfies(&self, val: &Valuation) -> Option<bool> {
        let mut ground = HerbrandStore::top();
        for v in self.vars() {
            match val.get(&v) {
                Some(Value::Tree(t)) => {
                    ground.bind.insert(v, t.clone());
                }
                _ => return None,
            }
        }
        Some(ground.entails(self))
    }

    /// Size of the ground term bound to `v`, if the binding is ground.
    /// Fast-path fingerprint for generator scans.
    pub fn ground_size_of(&self, v: &Var) -> Option<u64> {
        if self.inconsistent {
            return None;
        }
        let mut memo = HashMap::new();
        let r = self.resolve(&Term::Var(v.clone()), &mut memo);
        if r.is_ground() {
            Some(r.size())
        } else {
            None
        }
    }

    /// The term `v` is bound to, fully resolved; `None` if unbound.
    /// Used for display substitution in forest dumps.
    pub fn binding_of(&self, v: &Var) -> Option<Term> {
        if self.inconsistent || !self.bind.contains_key(v) {
            return None;
        }
        let mut memo = HashMap::new();
        Some(self.resolve(&Term::Var(v.clone()), &mut memo))
    }

    /// Fully applies the substitution to an arbitrary term.
    pub fn resolve_term(&self, t: &Term) -> Term {
        if self.inconsistent {
            return t.clone();
        }
        let mut memo = HashMap::new();
        self.resolve(t, &mut memo)
    }

    /// Canonical bindings kept only when the binder and every plain
    /// variable of the bound term lie in `keep`. Witnesses are
    /// existential and do not count as outside variables.
    pub fn drop_atoms_outside(&self, keep: &VarSet) -> HerbrandStore {
        if self.inconsistent {
            return HerbrandStore::bottom();
        }
        let mut out = im::OrdMap::new();
        for (v, t) in self.canonical().bind {
            if !keep.contains(&v) {
                continue;
            }
            if t.vars().iter().any(|u| !u.is_witness() && !keep.contains(u)) {
                continue;
            }
            out.insert(v, t);
        }
        HerbrandStore {
            inconsistent: false,
            bind: out,
        }
    }

    /// Existential witnesses appearing anywhere in the bindings.
    pub fn witness_vars(&self) -> Vec<Var> {
        let mut out = std::collections::BTreeSet::new();
        for (v, t) in self.bind.iter() {
            if v.is_witness() {
                out.insert(v.clone());
            }
            for u in t.vars() {
                if u.is_witness() {
                    out.insert(u);
                }
            }
        }
        out.into_iter().collect()
    }
}

fn rewrite_vars(t: &Term, map: &BTreeMap<Var, Var>) -> Term {
    rewrite_with(t, &mut |v| {
        Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone()))
    })
}

fn rewrite_with(t: &Term, f: &mut impl FnMut(&Var) -> Term) -> Term {
    if t.is_ground() {
        return t.clone();
    }
    match t {
        Term::Var(v) => f(v),
        Term::Sym(_) | Term::Rat(_) => t.clone(),
        Term::App(app) => Term::App(Arc::new(App::new(
            app.functor.clone(),
            app.args.iter().map(|a| rewrite_with(a, f)).collect(),
        ))),
    }
}

fn renumber_witnesses(t: &Term, wmap: &mut BTreeMap<Var, Var>) -> Term {
    rewrite_with(t, &mut |v| {
        if v.is_witness() {
            let next = wmap.len() as u64;
            Term::Var(
                wmap.entry(v.clone())
                    .or_insert_with(|| Var::Exists(next))
                    .clone(),
            )
        } else {
            Term::Var(v.clone())
        }
    })
}

fn shift_witnesses(t: &Term, offset: u64) -> Term {
    rewrite_with(t, &mut |v| match v {
        Var::Exists(n) => Term::Var(Var::Exists(n + offset)),
        _ => Term::Var(v.clone()),
    })
}
