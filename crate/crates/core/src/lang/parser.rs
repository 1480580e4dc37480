use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::{BigInt, BigRational};

use super::ast::*;
use super::lexer::{lex, Spanned, Tok};
use super::LangError;

/// Operators exempt from the one-arity-per-functor rule (unary and
/// binary minus coexist).
const OPERATOR_FUNCTORS: [&str; 4] = ["+", "-", "*", "/"];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    anon: u64,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, LangError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            anon: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(s) => (s.line, s.col),
            None => self
                .toks
                .last()
                .map(|s| (s.line, s.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn fail<T>(&self, msg: &str) -> Result<T, LangError> {
        let (line, col) = self.here();
        Err(LangError::Parse {
            line,
            col,
            msg: msg.to_string(),
        })
    }

    fn next(&mut self, what: &str) -> Result<Tok, LangError> {
        match self.toks.get(self.pos) {
            Some(s) => {
                let t = s.tok.clone();
                self.pos += 1;
                Ok(t)
            }
            None => self.fail(&format!("unexpected end of input, expected {what}")),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), LangError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let found = t.describe();
                self.fail(&format!("expected {}, found {found}", tok.describe()))
            }
            None => self.fail(&format!(
                "unexpected end of input, expected {}",
                tok.describe()
            )),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn name(&mut self, what: &str) -> Result<String, LangError> {
        match self.next(what)? {
            Tok::Name(s) => Ok(s),
            t => self.fail(&format!("expected {what}, found {}", t.describe())),
        }
    }

    // term := sum; sum := product (("+"|"-") product)*;
    // product := prim ("*" prim)*;
    // prim := INT ("/" INT)? | VAR | name ("(" term,+ ")")? | "-" prim | "(" term ")"
    fn term(&mut self) -> Result<Term, LangError> {
        let mut acc = self.product()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.product()?;
                acc = Term::app("+", vec![acc, rhs]);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.product()?;
                acc = Term::app("-", vec![acc, rhs]);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Term, LangError> {
        let mut acc = self.prim()?;
        while self.eat(&Tok::Star) {
            let rhs = self.prim()?;
            acc = Term::app("*", vec![acc, rhs]);
        }
        Ok(acc)
    }

    fn prim(&mut self) -> Result<Term, LangError> {
        match self.next("a term")? {
            Tok::Int(n) => {
                if self.peek() == Some(&Tok::Slash) {
                    if let Some(Tok::Int(_)) = self.peek2() {
                        self.pos += 1;
                        let d = match self.next("denominator")? {
                            Tok::Int(d) => d,
                            _ => unreachable!(),
                        };
                        if d == BigInt::from(0) {
                            return self.fail("rational literal with zero denominator");
                        }
                        return Ok(Term::Rat(BigRational::new(n, d)));
                    }
                }
                Ok(Term::Rat(BigRational::from_integer(n)))
            }
            Tok::VarName(s) => {
                if s == "_" {
                    self.anon += 1;
                    let fresh = format!("_A{}", self.anon);
                    Ok(Term::Var(Var::named(&fresh)))
                } else {
                    Ok(Term::Var(Var::named(&s)))
                }
            }
            Tok::Name(s) => {
                if self.eat(&Tok::LParen) {
                    let mut args = vec![self.term()?];
                    while self.eat(&Tok::Comma) {
                        args.push(self.term()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Term::app(&s, args))
                } else {
                    Ok(Term::sym(&s))
                }
            }
            Tok::Minus => {
                let t = self.prim()?;
                match t {
                    Term::Rat(r) => Ok(Term::Rat(-r)),
                    other => Ok(Term::app("-", vec![other])),
                }
            }
            Tok::LParen => {
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            t => self.fail(&format!("expected a term, found {}", t.describe())),
        }
    }

    fn rel_op(&mut self) -> Result<RelOp, LangError> {
        match self.next("a relational operator")? {
            Tok::Eq => Ok(RelOp::Eq),
            Tok::Lt => Ok(RelOp::Lt),
            Tok::Le => Ok(RelOp::Le),
            Tok::Gt => Ok(RelOp::Gt),
            Tok::Ge => Ok(RelOp::Ge),
            t => self.fail(&format!(
                "expected a relational operator, found {}",
                t.describe()
            )),
        }
    }

    fn constraint_atom(&mut self) -> Result<ConstraintAtom, LangError> {
        let lhs = self.term()?;
        let op = self.rel_op()?;
        let rhs = self.term()?;
        Ok(ConstraintAtom { lhs, op, rhs })
    }

    /// `{ atom, atom, ... }` — each atom becomes its own body item.
    fn constraint_group(&mut self) -> Result<Vec<ConstraintAtom>, LangError> {
        self.expect(Tok::LBrace)?;
        let mut atoms = vec![self.constraint_atom()?];
        while self.eat(&Tok::Comma) {
            atoms.push(self.constraint_atom()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(atoms)
    }

    fn literal(&mut self) -> Result<Literal, LangError> {
        let pred = self.name("a predicate name")?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            args.push(self.term()?);
            while self.eat(&Tok::Comma) {
                args.push(self.term()?);
            }
            self.expect(Tok::RParen)?;
        }
        Ok(Literal::new(&pred, args))
    }

    fn body(&mut self) -> Result<Vec<BodyItem>, LangError> {
        let mut items = Vec::new();
        loop {
            if self.peek() == Some(&Tok::LBrace) {
                for atom in self.constraint_group()? {
                    items.push(BodyItem::Constraint(atom));
                }
            } else {
                items.push(BodyItem::Literal(self.literal()?));
            }
            if !self.eat(&Tok::Comma) {
                return Ok(items);
            }
        }
    }

    fn directive(
        &mut self,
        tabled: &mut BTreeSet<(Arc<str>, usize)>,
        solver: &mut Option<DomainTag>,
    ) -> Result<(), LangError> {
        let what = self.name("`table` or `solver`")?;
        match what.as_str() {
            "table" => {
                let pred = self.name("a predicate name")?;
                self.expect(Tok::Slash)?;
                let arity = match self.next("an arity")? {
                    Tok::Int(n) => n,
                    t => return self.fail(&format!("expected an arity, found {}", t.describe())),
                };
                let arity: usize = arity
                    .try_into()
                    .map_err(|_| self.fail::<()>("arity out of range").unwrap_err())?;
                tabled.insert((Arc::from(pred.as_str()), arity));
            }
            "solver" => {
                self.expect(Tok::LParen)?;
                let name = self.name("a solver name")?;
                self.expect(Tok::RParen)?;
                let tag = DomainTag::parse(&name).ok_or(LangError::UnknownSolver(name))?;
                if let Some(prev) = *solver {
                    if prev != tag {
                        return self.fail(&format!(
                            "conflicting solver directives: {prev} and {tag}"
                        ));
                    }
                }
                *solver = Some(tag);
            }
            other => {
                return self.fail(&format!("unknown directive `{other}`"));
            }
        }
        self.expect(Tok::Dot)?;
        Ok(())
    }

    fn program(&mut self) -> Result<Program, LangError> {
        let mut clauses = Vec::new();
        let mut tabled = BTreeSet::new();
        let mut solver = None;
        while self.peek().is_some() {
            if self.eat(&Tok::ColonDash) {
                self.directive(&mut tabled, &mut solver)?;
            } else {
                let head = self.literal()?;
                let body = if self.eat(&Tok::ColonDash) {
                    self.body()?
                } else {
                    Vec::new()
                };
                self.expect(Tok::Dot)?;
                clauses.push(Clause { head, body });
            }
        }
        let program = Program {
            clauses,
            tabled,
            solver: solver.unwrap_or(DomainTag::Herbrand),
        };
        check_arities(&program)?;
        Ok(program)
    }

    fn query(&mut self) -> Result<Query, LangError> {
        self.eat(&Tok::QueryDash);
        let mut constraints = Vec::new();
        loop {
            if self.peek() == Some(&Tok::LBrace) {
                constraints.extend(self.constraint_group()?);
                if !self.eat(&Tok::Comma) {
                    return self.fail("query needs a goal literal after its constraints");
                }
            } else {
                break;
            }
        }
        let goal = self.literal()?;
        self.eat(&Tok::Dot);
        if self.peek().is_some() {
            return self.fail("a query takes exactly one goal literal");
        }
        Ok(Query { constraints, goal })
    }
}

/// One arity per predicate name and per (non-operator) functor name.
fn check_arities(p: &Program) -> Result<(), LangError> {
    let mut preds: BTreeMap<Arc<str>, usize> = BTreeMap::new();
    let mut functors: BTreeMap<Arc<str>, usize> = BTreeMap::new();

    fn note(
        map: &mut BTreeMap<Arc<str>, usize>,
        name: &Arc<str>,
        arity: usize,
    ) -> Result<(), LangError> {
        if let Some(&prev) = map.get(name) {
            if prev != arity {
                return Err(LangError::ArityConflict {
                    name: name.to_string(),
                    a1: prev.min(arity),
                    a2: prev.max(arity),
                });
            }
        } else {
            map.insert(name.clone(), arity);
        }
        Ok(())
    }

    fn walk_term(t: &Term, functors: &mut BTreeMap<Arc<str>, usize>) -> Result<(), LangError> {
        if let Term::App(app) = t {
            if !OPERATOR_FUNCTORS.contains(&&*app.functor) {
                note(functors, &app.functor, app.args.len())?;
            }
            for a in &app.args {
                walk_term(a, functors)?;
            }
        }
        Ok(())
    }

    for c in &p.clauses {
        note(&mut preds, &c.head.pred, c.head.args.len())?;
        for a in &c.head.args {
            walk_term(a, &mut functors)?;
        }
        for item in &c.body {
            match item {
                BodyItem::Literal(l) => {
                    note(&mut preds, &l.pred, l.args.len())?;
                    for a in &l.args {
                        walk_term(a, &mut functors)?;
                    }
                }
                BodyItem::Constraint(atom) => {
                    walk_term(&atom.lhs, &mut functors)?;
                    walk_term(&atom.rhs, &mut functors)?;
                }
            }
        }
    }
    Ok(())
}

pub fn parse_program(src: &str) -> Result<Program, LangError> {
    Parser::new(src)?.program()
}

pub fn parse_query(src: &str) -> Result<Query, LangError> {
    Parser::new(src)?.query()
}
