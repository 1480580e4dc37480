//! Concrete syntax and abstract syntax for constraint logic programs.
//!
//! Programs are Prolog-shaped: clauses `head :- body.` where body items
//! are literals or `{...}` constraint groups, plus `:- table p/n.` and
//! `:- solver(name).` directives. Queries are `?- {c, ...}, goal.` with
//! exactly one goal literal; conjunctive queries go through a driver
//! clause. Parsing never interprets constraints — that is the solvers'
//! job — so the same AST serves all three domains.

mod ast;
mod lexer;
mod normalize;
mod parser;

pub use ast::{
    App, BodyItem, Clause, ConstraintAtom, DomainTag, Literal, Program, Query, RelOp, Term, Var,
};
pub use normalize::{
    normalize_clause, normalize_program, rename_apart, rename_atom, rename_literal, rename_term,
    Gensym,
};
pub use parser::{parse_program, parse_query};

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unknown solver `{0}` (expected herbrand, linq or gaporder)")]
    UnknownSolver(String),
    #[error("`{name}` is used with two arities ({a1} and {a2})")]
    ArityConflict { name: String, a1: usize, a2: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIST_RIGHT: &str = "\
:- solver(linq).
:- table dist/3.
dist(X, Y, D) :- {D1 > 0, D2 > 0, D = D1 + D2}, edge(X, Z, D1), dist(Z, Y, D2).
dist(X, Y, D) :- edge(X, Y, D).
edge(a, b, 50).
edge(b, a, W) :- {W > 25, W < 35}.
";

    #[test]
    fn parses_right_recursive_dist() {
        let p = parse_program(DIST_RIGHT).unwrap();
        assert_eq!(p.solver, DomainTag::Linq);
        assert_eq!(p.clauses.len(), 4);
        assert!(p.tabled.contains(&("dist".into(), 3)));
        // Constraint groups flatten to one item per atom.
        let rec = &p.clauses[0];
        assert_eq!(rec.body.len(), 5);
        assert!(matches!(rec.body[0], BodyItem::Constraint(_)));
        assert!(matches!(rec.body[3], BodyItem::Literal(_)));
    }

    #[test]
    fn parses_fact_and_dotted_aliases() {
        let p = parse_program("p(a).\nq(X) :- {X .>. 0}, p(X).").unwrap();
        assert_eq!(p.solver, DomainTag::Herbrand);
        assert_eq!(p.clauses[0].head, Literal::new("p", vec![Term::sym("a")]));
        match &p.clauses[1].body[0] {
            BodyItem::Constraint(c) => assert_eq!(c.op, RelOp::Gt),
            other => panic!("expected constraint, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_position() {
        let err = parse_program("p(X :- q.").unwrap_err();
        match err {
            LangError::Parse { line, col, .. } => {
                assert_eq!(line, 1);
                assert!(col >= 5, "col = {col}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_solver_is_rejected() {
        let err = parse_program(":- solver(reals).").unwrap_err();
        assert_eq!(err, LangError::UnknownSolver("reals".into()));
    }

    #[test]
    fn arity_conflicts_are_rejected() {
        let err = parse_program("p(a).\np(a, b).").unwrap_err();
        assert!(matches!(err, LangError::ArityConflict { .. }));
    }

    #[test]
    fn rational_literals() {
        let p = parse_program("w(3/2).\nv(-5).").unwrap();
        match &p.clauses[0].head.args[0] {
            Term::Rat(r) => assert_eq!(r.to_string(), "3/2"),
            other => panic!("expected rational, got {other:?}"),
        }
        match &p.clauses[1].head.args[0] {
            Term::Rat(r) => assert_eq!(r.to_string(), "-5"),
            other => panic!("expected rational, got {other:?}"),
        }
    }

    #[test]
    fn normalize_rewrites_constant_head_args() {
        let mut g = Gensym::new();
        let p = parse_program("p(a).").unwrap();
        let c = normalize_clause(&p.clauses[0], &mut g);
        assert_eq!(c.head.args.len(), 1);
        assert!(matches!(c.head.args[0], Term::Var(_)));
        assert_eq!(c.body.len(), 1);
        match &c.body[0] {
            BodyItem::Constraint(eq) => {
                assert_eq!(eq.op, RelOp::Eq);
                assert_eq!(eq.rhs, Term::sym("a"));
            }
            other => panic!("expected equation, got {other:?}"),
        }
    }

    #[test]
    fn normalize_splits_repeated_head_vars() {
        let mut g = Gensym::new();
        let p = parse_program("p(X, X).").unwrap();
        let c = normalize_clause(&p.clauses[0], &mut g);
        assert_ne!(c.head.args[0], c.head.args[1]);
        assert_eq!(c.body.len(), 1);
        match &c.body[0] {
            BodyItem::Constraint(eq) => {
                assert_eq!(eq.lhs, c.head.args[1]);
                assert_eq!(eq.rhs, c.head.args[0]);
            }
            other => panic!("expected equation, got {other:?}"),
        }
    }

    #[test]
    fn normalize_keeps_distinct_var_heads() {
        let mut g = Gensym::new();
        let p = parse_program("p(X, Y) :- q(X, Y).").unwrap();
        let c = normalize_clause(&p.clauses[0], &mut g);
        assert_eq!(c, p.clauses[0]);
    }

    #[test]
    fn rename_apart_is_consistent_and_fresh() {
        let mut g = Gensym::new();
        let p = parse_program("p(X, X, Y) :- {X < Y}, q(Y).").unwrap();
        let c = rename_apart(&p.clauses[0], &mut g);
        assert_eq!(c.head.args[0], c.head.args[1]);
        assert_ne!(c.head.args[0], c.head.args[2]);
        for v in c.head.vars() {
            assert!(matches!(v, Var::Fresh(_)));
        }
        // A second renaming shares nothing with the first.
        let c2 = rename_apart(&p.clauses[0], &mut g);
        for v in c2.head.vars() {
            assert!(!c.head.vars().contains(&v));
        }
    }

    #[test]
    fn query_round_trip_and_shape() {
        let q = parse_query("?- {D < 150}, dist(a, Y, D).").unwrap();
        assert_eq!(q.constraints.len(), 1);
        assert_eq!(q.goal.pred.as_ref(), "dist");
        assert_eq!(
            q.vars(),
            vec![Var::named("D"), Var::named("Y")],
            "constraint vars first, then goal vars"
        );
        // Optional ?- and trailing dot.
        let q2 = parse_query("{D < 150}, dist(a, Y, D)").unwrap();
        assert_eq!(q, q2);
    }

    #[test]
    fn query_requires_exactly_one_goal() {
        assert!(parse_query("?- p(X), q(X).").is_err());
        assert!(parse_query("?- {X > 0}.").is_err());
    }

    #[test]
    fn print_parse_round_trip() {
        let p = parse_program(DIST_RIGHT).unwrap();
        let printed = p.to_string();
        let p2 = parse_program(&printed).unwrap();
        assert_eq!(p, p2);
    }
}
