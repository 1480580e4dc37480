use std::collections::BTreeMap;

use super::ast::*;

/// Source of globally fresh variables. One instance per engine run keeps
/// renamed-apart clauses, generator signatures and witnesses disjoint.
#[derive(Clone, Debug, Default)]
pub struct Gensym {
    next: u64,
}

impl Gensym {
    pub fn new() -> Gensym {
        Gensym { next: 0 }
    }

    pub fn fresh(&mut self) -> Var {
        let v = Var::Fresh(self.next);
        self.next += 1;
        v
    }
}

pub fn rename_term(t: &Term, map: &BTreeMap<Var, Var>) -> Term {
    // renaming only touches variables; sharing ground subtrees keeps this
    // constant-time on the deep ground chains long runs accumulate
    if t.is_ground() {
        return t.clone();
    }
    match t {
        Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        Term::Sym(_) | Term::Rat(_) => t.clone(),
        Term::App(app) => Term::app(
            &app.functor,
            app.args.iter().map(|a| rename_term(a, map)).collect(),
        ),
    }
}

pub fn rename_literal(l: &Literal, map: &BTreeMap<Var, Var>) -> Literal {
    Literal {
        pred: l.pred.clone(),
        args: l.args.iter().map(|a| rename_term(a, map)).collect(),
    }
}

pub fn rename_atom(c: &ConstraintAtom, map: &BTreeMap<Var, Var>) -> ConstraintAtom {
    ConstraintAtom {
        lhs: rename_term(&c.lhs, map),
        op: c.op,
        rhs: rename_term(&c.rhs, map),
    }
}

/// Renames every variable of the clause to a fresh one, consistently.
pub fn rename_apart(c: &Clause, gensym: &mut Gensym) -> Clause {
    let mut map = BTreeMap::new();
    let note = |vs: Vec<Var>, map: &mut BTreeMap<Var, Var>, gensym: &mut Gensym| {
        for v in vs {
            map.entry(v).or_insert_with(|| gensym.fresh());
        }
    };
    note(c.head.vars(), &mut map, gensym);
    for item in &c.body {
        match item {
            BodyItem::Constraint(a) => note(a.vars(), &mut map, gensym),
            BodyItem::Literal(l) => note(l.vars(), &mut map, gensym),
        }
    }
    Clause {
        head: rename_literal(&c.head, &map),
        body: c
            .body
            .iter()
            .map(|item| match item {
                BodyItem::Constraint(a) => BodyItem::Constraint(rename_atom(a, &map)),
                BodyItem::Literal(l) => BodyItem::Literal(rename_literal(l, &map)),
            })
            .collect(),
    }
}

/// Rewrites the head so its arguments are distinct variables; displaced
/// arguments become `{V = arg}` constraints prepended to the body in
/// argument order. `p(a).` becomes `p(V) :- {V = a}.`, `p(X, X)` becomes
/// `p(X, V) :- {V = X}`.
pub fn normalize_clause(c: &Clause, gensym: &mut Gensym) -> Clause {
    let mut seen: Vec<Var> = Vec::new();
    let mut eqs: Vec<ConstraintAtom> = Vec::new();
    let mut args = Vec::new();
    for arg in &c.head.args {
        match arg {
            Term::Var(v) if !seen.contains(v) => {
                seen.push(v.clone());
                args.push(arg.clone());
            }
            _ => {
                let v = gensym.fresh();
                eqs.push(ConstraintAtom::eq(Term::Var(v.clone()), arg.clone()));
                seen.push(v.clone());
                args.push(Term::Var(v));
            }
        }
    }
    let mut body: Vec<BodyItem> = eqs.into_iter().map(BodyItem::Constraint).collect();
    body.extend(c.body.iter().cloned());
    Clause {
        head: Literal {
            pred: c.head.pred.clone(),
            args,
        },
        body,
    }
}

/// Normalizes every clause of the program.
pub fn normalize_program(p: &Program, gensym: &mut Gensym) -> Program {
    Program {
        clauses: p
            .clauses
            .iter()
            .map(|c| normalize_clause(c, gensym))
            .collect(),
        tabled: p.tabled.clone(),
        solver: p.solver,
    }
}
