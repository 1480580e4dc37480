use std::fmt;
use std::sync::Arc;

use num::BigRational;

/// A logic variable. `Named` comes from source text, `Fresh` from
/// renaming-apart, `Exists` marks existential witnesses introduced by
/// projection. The derived order (Named < Fresh < Exists) doubles as the
/// canonical variable order used by the solvers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Var {
    Named(Arc<str>),
    Fresh(u64),
    Exists(u64),
}

impl Var {
    pub fn named(s: &str) -> Var {
        Var::Named(Arc::from(s))
    }

    pub fn is_witness(&self) -> bool {
        matches!(self, Var::Exists(_))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Named(s) => write!(f, "{s}"),
            Var::Fresh(n) => write!(f, "_V{n}"),
            Var::Exists(n) => write!(f, "_E{n}"),
        }
    }
}

/// First-order terms. Compounds share structure through `Arc` so that
/// substitution along deep derivations stays cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(Var),
    /// Symbolic constant: `a`, `b`, `foo`.
    Sym(Arc<str>),
    /// Numeric constant, exact rational.
    Rat(BigRational),
    App(Arc<App>),
}

#[derive(Clone, Debug)]
pub struct App {
    pub functor: Arc<str>,
    pub args: Vec<Term>,
    // derived from functor/args at construction; lets deep shared terms
    // answer groundness/size/equality questions without re-traversal
    meta: AppMeta,
}

#[derive(Clone, Copy, Debug)]
struct AppMeta {
    ground: bool,
    size: u64,
    hash: u64,
}

impl App {
    pub fn new(functor: Arc<str>, args: Vec<Term>) -> App {
        use std::hash::{Hash as _, Hasher as _};
        let ground = args.iter().all(Term::is_ground);
        let size = 1 + args.iter().map(Term::size).sum::<u64>();
        let mut h = std::collections::hash_map::DefaultHasher::new();
        functor.hash(&mut h);
        args.len().hash(&mut h);
        for a in &args {
            a.cached_hash().hash(&mut h);
        }
        App {
            functor,
            args,
            meta: AppMeta {
                ground,
                size,
                hash: h.finish(),
            },
        }
    }

    pub fn is_ground(&self) -> bool {
        self.meta.ground
    }

    pub fn size(&self) -> u64 {
        self.meta.size
    }
}

impl PartialEq for App {
    fn eq(&self, other: &App) -> bool {
        std::ptr::eq(self, other)
            || (self.meta.hash == other.meta.hash
                && self.meta.size == other.meta.size
                && self.functor == other.functor
                && self.args == other.args)
    }
}

// Long runs can build term chains tens of thousands of nodes deep; the
// default drop glue recurses to term depth and overflows the stack there.
// Dismantle uniquely-owned children iteratively instead.
impl Drop for App {
    fn drop(&mut self) {
        if self.args.iter().all(|a| !matches!(a, Term::App(_))) {
            return;
        }
        let mut work = std::mem::take(&mut self.args);
        while let Some(t) = work.pop() {
            if let Term::App(arc) = t {
                if let Ok(mut app) = Arc::try_unwrap(arc) {
                    work.append(&mut app.args);
                }
            }
        }
    }
}

impl Eq for App {}

impl PartialOrd for App {
    fn partial_cmp(&self, other: &App) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for App {
    fn cmp(&self, other: &App) -> std::cmp::Ordering {
        (&self.functor, &self.args).cmp(&(&other.functor, &other.args))
    }
}

impl std::hash::Hash for App {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.meta.hash);
    }
}

impl Term {
    pub fn sym(s: &str) -> Term {
        Term::Sym(Arc::from(s))
    }

    pub fn int(n: i64) -> Term {
        Term::Rat(BigRational::from_integer(n.into()))
    }

    pub fn app(functor: &str, args: Vec<Term>) -> Term {
        Term::App(Arc::new(App::new(Arc::from(functor), args)))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Sym(_) | Term::Rat(_) => true,
            Term::App(app) => app.is_ground(),
        }
    }

    /// Node count, with compound sizes precomputed at construction.
    pub fn size(&self) -> u64 {
        match self {
            Term::Var(_) | Term::Sym(_) | Term::Rat(_) => 1,
            Term::App(app) => app.size(),
        }
    }

    /// Structural hash; `App` nodes carry theirs precomputed.
    pub fn cached_hash(&self) -> u64 {
        use std::hash::{Hash as _, Hasher as _};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    /// Collects variables in first-occurrence order.
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Sym(_) | Term::Rat(_) => {}
            Term::App(app) => {
                // ground subtrees hold no variables; skipping them keeps
                // this linear in the non-ground part of shared deep terms
                if !app.is_ground() {
                    for a in &app.args {
                        a.collect_vars(out);
                    }
                }
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }
}

impl Term {
    fn is_sum_app(&self) -> bool {
        matches!(self, Term::App(app)
            if (&*app.functor == "+" || &*app.functor == "-") && app.args.len() == 2)
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parenthesize_sums: bool) -> fmt::Result {
        if parenthesize_sums && self.is_sum_app() {
            write!(f, "(")?;
            self.fmt_prec(f, false)?;
            return write!(f, ")");
        }
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Sym(s) => write!(f, "{s}"),
            Term::Rat(r) => write!(f, "{r}"),
            Term::App(app) => match (&*app.functor, app.args.len()) {
                ("+", 2) | ("-", 2) => {
                    app.args[0].fmt_prec(f, false)?;
                    write!(f, " {} ", app.functor)?;
                    // Right operand of a sum reparses wrong unless guarded:
                    // a + b - c is (a + b) - c, not a + (b - c).
                    app.args[1].fmt_prec(f, true)
                }
                ("*", 2) => {
                    app.args[0].fmt_prec(f, true)?;
                    write!(f, "*")?;
                    app.args[1].fmt_prec(f, true)
                }
                ("-", 1) => {
                    write!(f, "-")?;
                    app.args[0].fmt_prec(f, true)
                }
                _ => {
                    write!(f, "{}(", app.functor)?;
                    for (i, a) in app.args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")
                }
            },
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

/// Relational operator of a constraint atom.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum RelOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for RelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RelOp::Eq => "=",
            RelOp::Lt => "<",
            RelOp::Le => "=<",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

/// One atomic constraint as written in a `{...}` group or produced by
/// normalization (head equations are `Eq` atoms).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ConstraintAtom {
    pub lhs: Term,
    pub op: RelOp,
    pub rhs: Term,
}

impl ConstraintAtom {
    pub fn eq(lhs: Term, rhs: Term) -> ConstraintAtom {
        ConstraintAtom {
            lhs,
            op: RelOp::Eq,
            rhs,
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.lhs.collect_vars(&mut out);
        self.rhs.collect_vars(&mut out);
        out
    }
}

impl fmt::Display for ConstraintAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Literal {
    pub pred: Arc<str>,
    pub args: Vec<Term>,
}

impl Literal {
    pub fn new(pred: &str, args: Vec<Term>) -> Literal {
        Literal {
            pred: Arc::from(pred),
            args,
        }
    }

    pub fn key(&self) -> (Arc<str>, usize) {
        (self.pred.clone(), self.args.len())
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_vars(&mut out);
        }
        out
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pred)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum BodyItem {
    Constraint(ConstraintAtom),
    Literal(Literal),
}

impl fmt::Display for BodyItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyItem::Constraint(c) => write!(f, "{{{c}}}"),
            BodyItem::Literal(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Clause {
    pub head: Literal,
    pub body: Vec<BodyItem>,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, item) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{item}")?;
            }
        }
        write!(f, ".")
    }
}

/// Constraint domain selected by the `:- solver(name).` directive.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum DomainTag {
    Herbrand,
    Linq,
    GapOrder,
}

impl DomainTag {
    pub fn name(self) -> &'static str {
        match self {
            DomainTag::Herbrand => "herbrand",
            DomainTag::Linq => "linq",
            DomainTag::GapOrder => "gaporder",
        }
    }

    pub fn parse(s: &str) -> Option<DomainTag> {
        match s {
            "herbrand" => Some(DomainTag::Herbrand),
            "linq" => Some(DomainTag::Linq),
            "gaporder" => Some(DomainTag::GapOrder),
            _ => None,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Program {
    pub clauses: Vec<Clause>,
    pub tabled: std::collections::BTreeSet<(Arc<str>, usize)>,
    pub solver: DomainTag,
}

impl Program {
    pub fn is_tabled(&self, lit: &Literal) -> bool {
        self.tabled.contains(&lit.key())
    }

    /// Clauses whose head matches the predicate/arity, in source order,
    /// paired with their 1-based index within the predicate (forest edges
    /// are labeled `clause(i)` with this index).
    pub fn clauses_for(&self, pred: &str, arity: usize) -> Vec<(usize, &Clause)> {
        self.clauses
            .iter()
            .filter(|c| &*c.head.pred == pred && c.head.args.len() == arity)
            .enumerate()
            .map(|(i, c)| (i + 1, c))
            .collect()
    }

    /// Symbolic constants appearing anywhere in the program, sorted.
    /// Used by the under-approximating sampler for the Herbrand domain.
    pub fn signature_syms(&self) -> Vec<Arc<str>> {
        fn walk(t: &Term, out: &mut Vec<Arc<str>>) {
            match t {
                Term::Sym(s) => {
                    if !out.contains(s) {
                        out.push(s.clone());
                    }
                }
                Term::App(app) => {
                    for a in &app.args {
                        walk(a, out);
                    }
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        for c in &self.clauses {
            for a in &c.head.args {
                walk(a, &mut out);
            }
            for item in &c.body {
                match item {
                    BodyItem::Constraint(atom) => {
                        walk(&atom.lhs, &mut out);
                        walk(&atom.rhs, &mut out);
                    }
                    BodyItem::Literal(l) => {
                        for a in &l.args {
                            walk(a, &mut out);
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, ":- solver({}).", self.solver)?;
        for (pred, arity) in &self.tabled {
            writeln!(f, ":- table {pred}/{arity}.")?;
        }
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A query `?- c1, ..., cm, goal` with the constraint prefix flattened.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Query {
    pub constraints: Vec<ConstraintAtom>,
    pub goal: Literal,
}

impl Query {
    /// Variables of the query in first-occurrence order (constraints
    /// first, then the goal). Answers are projected onto these.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for c in &self.constraints {
            self_extend(&mut out, c.vars());
        }
        self_extend(&mut out, self.goal.vars());
        out
    }
}

fn self_extend(out: &mut Vec<Var>, vs: Vec<Var>) {
    for v in vs {
        if !out.contains(&v) {
            out.push(v);
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?- ")?;
        for c in &self.constraints {
            write!(f, "{{{c}}}, ")?;
        }
        write!(f, "{}.", self.goal)
    }
}
