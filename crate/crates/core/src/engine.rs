//! Goal-directed resolution over constraint stores, with tabling of
//! calls by entailment.
//!
//! A run maintains a forest of derivation trees: one for the query and
//! one per *generator* (a tabled call pattern that owns an answer
//! table). Expanding a tabled literal first scans the existing
//! generators in creation order; if the call store conjoined with the
//! argument equations is consistent and entails the generator's store,
//! the call *suspends* as a consumer of that table instead of being
//! resolved against clauses. Otherwise a new generator and tree are
//! opened, and the call becomes the first consumer of its own table.
//! Answers reaching the root of a generator tree are projected onto
//! the generator's variables and recorded (subject to the answer
//! policy); deliveries to suspended consumers run through a global
//! FIFO worklist while clause exploration itself is depth-first, so
//! each tree is explored as far as possible before answers flow.
//!
//! Strategies: `tclp` is the full machine; `tab-variant` replaces the
//! entailment checks by equality up to variable renaming (of both the
//! literal and the projected store) and deduplicates answers the same
//! way; `lp` and `clp` disable tabling entirely and differ only in the
//! program encodings they are conventionally run on.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use num::BigRational;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::lang::{
    rename_apart, rename_literal, BodyItem, Gensym, Literal, Program, Query, Term, Var,
};
use crate::projvariants::{apply_projection, ProjectionMode};
use crate::store::{arg_equations, SolverError, Store, VarSet};

/// Which operational semantics drives the run.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Strategy {
    /// Plain depth-first resolution, no tabling. Conventionally run on
    /// programs that place arithmetic after the calls.
    Lp,
    /// Plain depth-first resolution with constraints where the program
    /// puts them (before the calls in the constrained encodings).
    Clp,
    /// Tabling with variant checks: a call suspends only on a
    /// generator equal to it up to variable renaming, and answers are
    /// deduplicated by equality up to renaming.
    TabVariant,
    /// Tabling with entailment checks on calls and answers.
    Tclp,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Lp => "lp",
            Strategy::Clp => "clp",
            Strategy::TabVariant => "tab-variant",
            Strategy::Tclp => "tclp",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "lp" => Some(Strategy::Lp),
            "clp" => Some(Strategy::Clp),
            "tab-variant" | "tab_variant" | "tab" => Some(Strategy::TabVariant),
            "tclp" => Some(Strategy::Tclp),
            _ => None,
        }
    }

    fn tables_calls(self) -> bool {
        matches!(self, Strategy::TabVariant | Strategy::Tclp)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What happens when a new answer reaches a generator's table.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum AnswerPolicy {
    /// Append unconditionally.
    KeepAll,
    /// Drop the new answer if some kept answer already entails it.
    DiscardNewEntailed,
    /// As above, and additionally remove kept answers that the new one
    /// generalizes, keeping the table an antichain of most general
    /// answers.
    DiscardAndRemove,
}

impl AnswerPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AnswerPolicy::KeepAll => "keep-all",
            AnswerPolicy::DiscardNewEntailed => "discard-new-entailed",
            AnswerPolicy::DiscardAndRemove => "discard-and-remove",
        }
    }

    pub fn parse(s: &str) -> Option<AnswerPolicy> {
        match s {
            "keep-all" | "keep_all" => Some(AnswerPolicy::KeepAll),
            "discard-new-entailed" | "discard_new_entailed" => {
                Some(AnswerPolicy::DiscardNewEntailed)
            }
            "discard-and-remove" | "discard_and_remove" => Some(AnswerPolicy::DiscardAndRemove),
            _ => None,
        }
    }
}

impl fmt::Display for AnswerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_BUDGET: u64 = 100_000;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub strategy: Strategy,
    pub answer_policy: AnswerPolicy,
    pub call_projection: ProjectionMode,
    pub answer_projection: ProjectionMode,
    /// Maximum number of transitions (constraint expansions, literal
    /// expansions, tabled-call dispatches, answer deliveries).
    pub budget: u64,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            strategy: Strategy::Tclp,
            answer_policy: AnswerPolicy::DiscardAndRemove,
            call_projection: ProjectionMode::Precise,
            answer_projection: ProjectionMode::Precise,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("budget must be positive")]
    BudgetMustBePositive,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum RunStatus {
    Complete,
    BudgetExceeded,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::BudgetExceeded => "budget-exceeded",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct Stats {
    pub transitions: u64,
    pub generators: u64,
    pub suspensions: u64,
    pub deliveries: u64,
    pub answers_added: u64,
    pub answers_discarded: u64,
    pub answers_removed: u64,
}

/// Outcome of a run: query answers in discovery order (projected onto
/// the query variables), termination status, counters and the forest.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub answers: Vec<Store>,
    pub status: RunStatus,
    pub stats: Stats,
    pub forest: ForestRecord,
}

impl SolveResult {
    pub fn rendered_answers(&self) -> Vec<String> {
        self.answers.iter().map(Store::render).collect()
    }
}

// ---------------------------------------------------------------------
// Forest records
// ---------------------------------------------------------------------

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum EdgeLabel {
    /// Resolution against the i-th clause of the predicate (1-based).
    Clause(usize),
    /// Expansion of the leading constraint atom.
    Constraint,
    /// Delivery of the j-th answer of the consumed generator (1-based).
    Answer(usize),
    /// No clause matched the leading literal.
    NoClause,
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeLabel::Clause(i) => write!(f, "clause({i})"),
            EdgeLabel::Constraint => write!(f, "constraint"),
            EdgeLabel::Answer(j) => write!(f, "answer({j})"),
            EdgeLabel::NoClause => write!(f, "fail"),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ChildRef {
    Node(usize),
    Fail,
}

#[derive(Clone, Debug)]
pub struct NodeRecord {
    pub resolvent: im::Vector<BodyItem>,
    pub store: Store,
    pub children: Vec<(EdgeLabel, ChildRef)>,
}

#[derive(Clone, Debug)]
pub struct AnswerRecord {
    pub store: Store,
    pub kept: bool,
}

#[derive(Clone, Debug)]
pub struct GeneratorRecord {
    pub literal: Literal,
    pub store: Store,
    pub answers: Vec<AnswerRecord>,
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct TreeRecord {
    /// `None` for the query tree.
    pub generator: Option<GeneratorRecord>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Clone, Debug)]
pub struct ForestRecord {
    pub query: TreeRecord,
    pub trees: Vec<TreeRecord>,
}

fn render_resolvent(items: &im::Vector<BodyItem>) -> Vec<String> {
    items
        .iter()
        .map(|it| match it {
            BodyItem::Constraint(a) => format!("{{{a}}}"),
            BodyItem::Literal(l) => l.to_string(),
        })
        .collect()
}

impl TreeRecord {
    fn node_json(&self) -> Json {
        let nodes: Vec<Json> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                let children: Vec<Json> = n
                    .children
                    .iter()
                    .map(|(label, child)| match child {
                        ChildRef::Node(k) => json!({"edge": label.to_string(), "node": k}),
                        ChildRef::Fail => json!({"edge": label.to_string(), "fail": true}),
                    })
                    .collect();
                json!({
                    "id": id,
                    "resolvent": render_resolvent(&n.resolvent),
                    "store": n.store.render(),
                    "children": children,
                })
            })
            .collect();
        Json::Array(nodes)
    }
}

impl ForestRecord {
    pub fn to_json(&self) -> Json {
        let trees: Vec<Json> = self
            .trees
            .iter()
            .map(|t| {
                let g = t.generator.as_ref().expect("generator trees carry a generator");
                let answers: Vec<Json> = g
                    .answers
                    .iter()
                    .map(|a| json!({"store": a.store.render(), "kept": a.kept}))
                    .collect();
                json!({
                    "generator": {
                        "literal": g.literal.to_string(),
                        "store": g.store.render(),
                        "answers": answers,
                        "complete": g.complete,
                    },
                    "nodes": t.node_json(),
                })
            })
            .collect();
        json!({
            "query": {"nodes": self.query.node_json()},
            "trees": trees,
        })
    }

    pub fn to_dot(&self) -> String {
        fn escape(s: &str) -> String {
            s.replace('\\', "\\\\").replace('"', "\\\"")
        }
        fn emit_tree(out: &mut String, tree: &TreeRecord, cluster: &str, title: &str) {
            out.push_str(&format!("  subgraph cluster_{cluster} {{\n"));
            out.push_str(&format!("    label=\"{}\";\n", escape(title)));
            for (id, n) in tree.nodes.iter().enumerate() {
                let res = render_resolvent(&n.resolvent).join(", ");
                let label = format!("[{}]\\n{}", escape(&res), escape(&n.store.render()));
                out.push_str(&format!(
                    "    {cluster}_{id} [shape=box, fontname=\"monospace\", label=\"{label}\"];\n"
                ));
                for (k, (edge, child)) in n.children.iter().enumerate() {
                    match child {
                        ChildRef::Node(c) => out.push_str(&format!(
                            "    {cluster}_{id} -> {cluster}_{c} [label=\"{edge}\"];\n"
                        )),
                        ChildRef::Fail => {
                            out.push_str(&format!(
                                "    {cluster}_{id}_f{k} [shape=plaintext, label=\"fail\"];\n"
                            ));
                            out.push_str(&format!(
                                "    {cluster}_{id} -> {cluster}_{id}_f{k} [label=\"{edge}\"];\n"
                            ));
                        }
                    }
                }
            }
            out.push_str("  }\n");
        }
        let mut out = String::from("digraph forest {\n  rankdir=TB;\n");
        emit_tree(&mut out, &self.query, "q", "query");
        for (i, t) in self.trees.iter().enumerate() {
            let g = t.generator.as_ref().expect("generator trees carry a generator");
            let title = format!("generator {}: {} | {}", i + 1, g.literal, g.store.render());
            emit_tree(&mut out, t, &format!("g{}", i + 1), &title);
        }
        out.push_str("}\n");
        out
    }
}

// ---------------------------------------------------------------------
// Call-pattern summaries (scan acceleration)
// ---------------------------------------------------------------------

/// A cheap per-argument abstraction of what a store says about a call
/// argument. Used as a necessary condition before the full entailment
/// or variant check: if the summaries are incompatible, the call
/// cannot suspend on the generator.
#[derive(Clone, PartialEq, Eq, Debug)]
enum ArgSig {
    /// Unconstrained.
    Free,
    /// Constrained in a way the summary does not capture.
    Opaque,
    /// Pinned to a symbol.
    Sym(Arc<str>),
    /// Numeric window; `bool` marks a strict bound.
    Num {
        lo: Option<(BigRational, bool)>,
        hi: Option<(BigRational, bool)>,
    },
    /// Pinned to a ground term with this fingerprint.
    Ground { size: u64, hash: u64 },
}

impl ArgSig {
    fn pinned(&self) -> bool {
        match self {
            ArgSig::Sym(_) | ArgSig::Ground { .. } => true,
            ArgSig::Num { lo, hi } => match (lo, hi) {
                (Some((l, false)), Some((h, false))) => l == h,
                _ => false,
            },
            _ => false,
        }
    }
}

fn summarize_term(store: &Store, t: &Term, exact: bool) -> Result<ArgSig, SolverError> {
    Ok(match t {
        Term::Sym(s) => match store {
            // in the two-sorted numeric domains a symbol argument acts
            // as a symbol pin; in Herbrand it is a ground term
            Store::Lin(_) | Store::Gap(_) => ArgSig::Sym(s.clone()),
            Store::Herbrand(_) => ArgSig::Ground {
                size: t.size(),
                hash: t.cached_hash(),
            },
        },
        Term::Rat(r) => ArgSig::Num {
            lo: Some((r.clone(), false)),
            hi: Some((r.clone(), false)),
        },
        Term::App(app) if app.is_ground() => ArgSig::Ground {
            size: t.size(),
            hash: t.cached_hash(),
        },
        Term::App(_) => ArgSig::Opaque,
        Term::Var(v) => match store {
            Store::Herbrand(s) => match s.binding_of(v) {
                None => ArgSig::Free,
                Some(b) if b.is_ground() => ArgSig::Ground {
                    size: b.size(),
                    hash: b.cached_hash(),
                },
                Some(_) => ArgSig::Opaque,
            },
            Store::Lin(s) => {
                if let Some(sym) = s.sym_value(v) {
                    return Ok(ArgSig::Sym(sym));
                }
                // the canonical single-variable rows under-tighten
                // (bounds can hide in multi-variable rows); when the
                // summary must be exact, eliminate everything else
                // first
                let projected;
                let view = if exact {
                    let keep: VarSet = std::iter::once(v.clone()).collect();
                    projected = s.project(&keep)?;
                    &projected
                } else {
                    s
                };
                let (point, lo, hi) = view.interval_of(v);
                if let Some(p) = point {
                    ArgSig::Num {
                        lo: Some((p.clone(), false)),
                        hi: Some((p, false)),
                    }
                } else if lo.is_none() && hi.is_none() {
                    ArgSig::Free
                } else {
                    ArgSig::Num { lo, hi }
                }
            }
            Store::Gap(s) => {
                let (lo, hi) = s.bounds_of(v);
                let rat = |n: i64| (BigRational::from_integer(n.into()), false);
                if lo.is_none() && hi.is_none() {
                    ArgSig::Free
                } else {
                    ArgSig::Num {
                        lo: lo.map(rat),
                        hi: hi.map(rat),
                    }
                }
            }
        },
    })
}

/// `false` means a store summarized by `call` can never entail one
/// summarized by `gen` (necessary condition only).
fn sig_compatible(call: &ArgSig, gen: &ArgSig) -> bool {
    match gen {
        ArgSig::Free | ArgSig::Opaque => true,
        ArgSig::Sym(s) => matches!(call, ArgSig::Sym(t) if t == s),
        ArgSig::Ground { size, hash } => {
            matches!(call, ArgSig::Ground { size: s2, hash: h2 } if s2 == size && h2 == hash)
        }
        ArgSig::Num { lo, hi } => {
            let ArgSig::Num { lo: clo, hi: chi } = call else {
                return false;
            };
            let lo_ok = match lo {
                None => true,
                Some((g, gs)) => match clo {
                    None => false,
                    Some((c, cs)) => c > g || (c == g && (*cs || !*gs)),
                },
            };
            let hi_ok = match hi {
                None => true,
                Some((g, gs)) => match chi {
                    None => false,
                    Some((c, cs)) => c < g || (c == g && (*cs || !*gs)),
                },
            };
            lo_ok && hi_ok
        }
    }
}

/// Loose summaries: read off the canonical rows without projecting.
/// May report wider intervals than the store entails — safe for
/// bucketing generators and classifying answers, not for pruning.
fn literal_sig_loose(store: &Store, lit: &Literal) -> Vec<ArgSig> {
    lit.args
        .iter()
        .map(|a| summarize_term(store, a, false).expect("loose summaries do not project"))
        .collect()
}

/// Exact summaries for call sites: what the store actually entails
/// per argument, required for the non-entailment prune to be sound.
fn literal_sig_exact(store: &Store, lit: &Literal) -> Result<Vec<ArgSig>, SolverError> {
    lit.args
        .iter()
        .map(|a| summarize_term(store, a, true))
        .collect()
}

/// Per-predicate index over generators, bucketed by the summary of the
/// first argument so that long chains of non-matching generators are
/// skipped without renaming or entailment work.
#[derive(Default)]
struct GenIndex {
    /// Generators whose first argument is unconstrained or opaque (or
    /// whose predicate is nullary): always candidates.
    always: Vec<usize>,
    by_sym: BTreeMap<Arc<str>, Vec<usize>>,
    by_fingerprint: BTreeMap<(u64, u64), Vec<usize>>,
    /// Numeric first argument with a lower bound, keyed by that bound.
    by_lo: BTreeMap<BigRational, Vec<usize>>,
    /// Numeric first argument bounded above only.
    lo_none: Vec<usize>,
}

impl GenIndex {
    fn insert(&mut self, gid: usize, sig: &[ArgSig]) {
        match sig.first() {
            None | Some(ArgSig::Free) | Some(ArgSig::Opaque) => self.always.push(gid),
            Some(ArgSig::Sym(s)) => self.by_sym.entry(s.clone()).or_default().push(gid),
            Some(ArgSig::Ground { size, hash }) => self
                .by_fingerprint
                .entry((*size, *hash))
                .or_default()
                .push(gid),
            Some(ArgSig::Num { lo: Some((l, _)), .. }) => {
                self.by_lo.entry(l.clone()).or_default().push(gid)
            }
            Some(ArgSig::Num { lo: None, .. }) => self.lo_none.push(gid),
        }
    }

    /// Candidate generators for a call with this first-argument
    /// summary, in creation order.
    fn candidates(&self, call0: Option<&ArgSig>) -> Vec<usize> {
        let mut out = self.always.clone();
        match call0 {
            None | Some(ArgSig::Free) | Some(ArgSig::Opaque) => {}
            Some(ArgSig::Sym(s)) => {
                if let Some(v) = self.by_sym.get(s) {
                    out.extend_from_slice(v);
                }
            }
            Some(ArgSig::Ground { size, hash }) => {
                if let Some(v) = self.by_fingerprint.get(&(*size, *hash)) {
                    out.extend_from_slice(v);
                }
            }
            Some(ArgSig::Num { lo, .. }) => {
                out.extend_from_slice(&self.lo_none);
                if let Some((c, _)) = lo {
                    for (_, v) in self.by_lo.range(..=c.clone()) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

// ---------------------------------------------------------------------
// The machine
// ---------------------------------------------------------------------

struct Node {
    resolvent: im::Vector<BodyItem>,
    store: Store,
    children: Vec<(EdgeLabel, ChildRef)>,
}

struct Tree {
    /// Generator id for generator trees, `None` for the query tree.
    gen: Option<usize>,
    nodes: Vec<Node>,
}

struct AnswerSlot {
    store: Store,
    render: String,
    removed: bool,
}

struct Gen {
    goal: Literal,
    store: Store,
    goal_vars: Vec<Var>,
    sig: Vec<ArgSig>,
    /// Generator store rendered under position-neutral variable names
    /// (goal variables numbered by first occurrence), so variant checks
    /// against a call reduce to a string comparison.
    neutral_render: String,
    answers: Vec<AnswerSlot>,
    dup: HashSet<String>,
    /// Indices of kept answers that are not pinned to a single point
    /// per variable; only these can entail a distinct new answer.
    wide: Vec<usize>,
    consumers: Vec<usize>,
    complete: bool,
}

struct Susp {
    gen: usize,
    tree: usize,
    node: usize,
    resolvent: im::Vector<BodyItem>,
    store: Store,
    /// Generator goal variables -> fresh variables of this call site.
    rho: BTreeMap<Var, Var>,
}

struct Machine<'p> {
    program: &'p Program,
    cfg: &'p EngineConfig,
    query_vars: VarSet,
    gensym: Gensym,
    genvar_next: u64,
    trees: Vec<Tree>,
    gens: Vec<Gen>,
    index: BTreeMap<(Arc<str>, usize), GenIndex>,
    susps: Vec<Susp>,
    stack: Vec<(usize, usize)>,
    queue: VecDeque<(usize, usize)>,
    answers: Vec<Store>,
    stats: Stats,
    budget_left: u64,
}

/// Runs a query against a program under the given configuration.
pub fn solve(program: &Program, query: &Query, cfg: &EngineConfig) -> Result<SolveResult, EngineError> {
    if cfg.budget == 0 {
        return Err(EngineError::BudgetMustBePositive);
    }
    let mut resolvent = im::Vector::new();
    for c in &query.constraints {
        resolvent.push_back(BodyItem::Constraint(c.clone()));
    }
    resolvent.push_back(BodyItem::Literal(query.goal.clone()));
    let root = Node {
        resolvent,
        store: Store::top(program.solver),
        children: Vec::new(),
    };
    let mut m = Machine {
        program,
        cfg,
        query_vars: query.vars().into_iter().collect(),
        gensym: Gensym::new(),
        genvar_next: 0,
        trees: vec![Tree {
            gen: None,
            nodes: vec![root],
        }],
        gens: Vec::new(),
        index: BTreeMap::new(),
        susps: Vec::new(),
        stack: vec![(0, 0)],
        queue: VecDeque::new(),
        answers: Vec::new(),
        stats: Stats::default(),
        budget_left: cfg.budget,
    };
    let status = m.run()?;
    Ok(m.finish(status))
}

impl<'p> Machine<'p> {
    fn run(&mut self) -> Result<RunStatus, EngineError> {
        loop {
            if self.budget_left == 0 {
                return Ok(RunStatus::BudgetExceeded);
            }
            if let Some((tree, node)) = self.stack.pop() {
                self.expand(tree, node)?;
            } else if let Some((sid, aidx)) = self.queue.pop_front() {
                if self.gens[self.susps[sid].gen].answers[aidx].removed {
                    continue;
                }
                self.deliver(sid, aidx)?;
            } else {
                for g in &mut self.gens {
                    g.complete = true;
                }
                return Ok(RunStatus::Complete);
            }
        }
    }

    fn spend(&mut self) {
        debug_assert!(self.budget_left > 0);
        self.budget_left -= 1;
        self.stats.transitions += 1;
    }

    /// Attaches a child state under `(tree, parent)`. Inconsistent
    /// stores become fail leaves; final states (empty resolvent)
    /// produce an answer immediately; anything else is scheduled for
    /// depth-first expansion unless `defer` collects it for ordered
    /// pushing.
    fn attach(
        &mut self,
        tree: usize,
        parent: usize,
        label: EdgeLabel,
        resolvent: im::Vector<BodyItem>,
        store: Store,
        defer: Option<&mut Vec<(usize, usize)>>,
    ) -> Result<(), EngineError> {
        if !store.is_consistent() {
            self.trees[tree].nodes[parent]
                .children
                .push((label, ChildRef::Fail));
            return Ok(());
        }
        let empty = resolvent.is_empty();
        let id = self.trees[tree].nodes.len();
        self.trees[tree].nodes.push(Node {
            resolvent,
            store: store.clone(),
            children: Vec::new(),
        });
        self.trees[tree].nodes[parent]
            .children
            .push((label, ChildRef::Node(id)));
        if empty {
            self.success(tree, store)?;
        } else if let Some(buf) = defer {
            buf.push((tree, id));
        } else {
            self.stack.push((tree, id));
        }
        Ok(())
    }

    fn expand(&mut self, tree: usize, node: usize) -> Result<(), EngineError> {
        let (front, rest, store) = {
            let n = &self.trees[tree].nodes[node];
            debug_assert!(!n.resolvent.is_empty(), "final states are not scheduled");
            let mut rest = n.resolvent.clone();
            let front = rest.pop_front().expect("non-empty resolvent");
            (front, rest, n.store.clone())
        };
        match front {
            BodyItem::Constraint(atom) => {
                self.spend();
                let next = store.conjoin_atom(&atom)?;
                self.attach(tree, node, EdgeLabel::Constraint, rest, next, None)
            }
            BodyItem::Literal(lit) => {
                let is_generator_root = self.trees[tree].gen.is_some() && node == 0;
                if !is_generator_root
                    && self.cfg.strategy.tables_calls()
                    && self.program.is_tabled(&lit)
                {
                    self.spend();
                    self.tabled_call(tree, node, &lit, rest, &store)
                } else {
                    self.spend();
                    self.expand_clauses(tree, node, &lit, rest, &store)
                }
            }
        }
    }

    fn expand_clauses(
        &mut self,
        tree: usize,
        node: usize,
        lit: &Literal,
        rest: im::Vector<BodyItem>,
        store: &Store,
    ) -> Result<(), EngineError> {
        let program = self.program;
        let clauses = program.clauses_for(&lit.pred, lit.args.len());
        if clauses.is_empty() {
            self.trees[tree].nodes[node]
                .children
                .push((EdgeLabel::NoClause, ChildRef::Fail));
            return Ok(());
        }
        // children are created in clause order (so immediate answers
        // keep source order) but pushed in reverse so that clause 1 is
        // explored first
        let mut pending: Vec<(usize, usize)> = Vec::new();
        for (i, clause) in clauses {
            let renamed = rename_apart(clause, &mut self.gensym);
            let mut st = store.clone();
            for eq in arg_equations(&lit.args, &renamed.head.args) {
                st = st.conjoin_atom(&eq)?;
                if !st.is_consistent() {
                    break;
                }
            }
            let mut resolvent = rest.clone();
            for item in renamed.body.iter().rev() {
                resolvent.push_front(item.clone());
            }
            self.attach(
                tree,
                node,
                EdgeLabel::Clause(i),
                resolvent,
                st,
                Some(&mut pending),
            )?;
        }
        while let Some(entry) = pending.pop() {
            self.stack.push(entry);
        }
        Ok(())
    }

    /// Resolves the call literal through the store where that yields a
    /// determined term; the remaining variables form the call pattern.
    fn resolve_call(&self, lit: &Literal, store: &Store) -> Literal {
        Literal {
            pred: lit.pred.clone(),
            args: lit.args.iter().map(|a| store.instantiate(a)).collect(),
        }
    }

    fn tabled_call(
        &mut self,
        tree: usize,
        node: usize,
        lit: &Literal,
        rest: im::Vector<BodyItem>,
        store: &Store,
    ) -> Result<(), EngineError> {
        let resolved = self.resolve_call(lit, store);
        let call_sig = literal_sig_exact(store, &resolved)?;
        let call_vars = ordered_vars(&resolved);
        let key = lit.key();

        let candidates = self
            .index
            .get(&key)
            .map(|ix| ix.candidates(call_sig.first()))
            .unwrap_or_default();

        // variant checks share one neutral render of the projected
        // call store, computed once per dispatch
        let call_neutral = if self.cfg.strategy == Strategy::TabVariant && !candidates.is_empty() {
            let keep: VarSet = call_vars.iter().cloned().collect();
            let proj = store.project(&keep)?;
            Some(neutral_store_render(&proj, &call_vars)?)
        } else {
            None
        };

        for gid in candidates {
            let compatible = {
                let g = &self.gens[gid];
                g.sig.len() == call_sig.len()
                    && call_sig.iter().zip(&g.sig).all(|(c, s)| sig_compatible(c, s))
            };
            if !compatible {
                continue;
            }
            match self.cfg.strategy {
                Strategy::Tclp => {
                    if let Some((base, rho)) = self.entailment_match(gid, lit, store)? {
                        self.register_consumer(gid, tree, node, rest, base, rho);
                        return Ok(());
                    }
                }
                Strategy::TabVariant => {
                    let neutral = call_neutral.as_deref().expect("render computed above");
                    if self.variant_match(gid, &resolved, neutral) {
                        let (base, rho) = self.link_to_generator(gid, lit, store)?;
                        self.register_consumer(gid, tree, node, rest, base, rho);
                        return Ok(());
                    }
                }
                _ => unreachable!("tabled_call only runs under tabling strategies"),
            }
        }

        self.new_generator(tree, node, &resolved, &call_vars, lit, rest, store)
    }

    /// The entailment consumer check: rename the generator apart, add
    /// the argument equations to the call store, and require the
    /// result to be consistent and to entail the generator's store.
    /// Returns the suspension base store and the goal-variable
    /// renaming when the call suspends.
    fn entailment_match(
        &mut self,
        gid: usize,
        lit: &Literal,
        store: &Store,
    ) -> Result<Option<(Store, BTreeMap<Var, Var>)>, EngineError> {
        let (goal, gstore, rho) = {
            let g = &self.gens[gid];
            let rho: BTreeMap<Var, Var> = g
                .goal_vars
                .iter()
                .map(|v| (v.clone(), self.gensym.fresh()))
                .collect();
            let goal = rename_literal(&g.goal, &rho);
            let gstore = g.store.rename(&rho)?;
            (goal, gstore, rho)
        };
        let mut base = store.clone();
        for eq in arg_equations(&lit.args, &goal.args) {
            base = base.conjoin_atom(&eq)?;
            if !base.is_consistent() {
                return Ok(None);
            }
        }
        if base.entails(&gstore) {
            #[cfg(debug_assertions)]
            if self.cfg.call_projection == ProjectionMode::Precise {
                // the projection of the linked store onto the renamed
                // goal variables must itself entail the generator store
                let keep: VarSet = rho.values().cloned().collect();
                let projected = base.project(&keep)?;
                assert!(
                    projected.entails(&gstore),
                    "consumer condition violated after projection: {} does not entail {}",
                    projected.render(),
                    gstore.render()
                );
            }
            Ok(Some((base, rho)))
        } else {
            Ok(None)
        }
    }

    /// The variant consumer check: the call literal must equal the
    /// generator goal up to a variable bijection, and the projected
    /// call store must equal the generator store in canonical form.
    /// Both stores are compared through their position-neutral renders
    /// (the call side precomputed once per dispatch, the generator side
    /// cached at creation), so each candidate costs one string compare.
    fn variant_match(&self, gid: usize, resolved: &Literal, call_neutral: &str) -> bool {
        let g = &self.gens[gid];
        if var_bijection(&resolved.args, &g.goal.args).is_none() {
            return false;
        }
        call_neutral == g.neutral_render
    }

    /// Conjoins the argument equations linking a call to a renamed
    /// copy of the generator goal (used after a successful variant
    /// check, and for the self-consumer of a new generator).
    fn link_to_generator(
        &mut self,
        gid: usize,
        lit: &Literal,
        store: &Store,
    ) -> Result<(Store, BTreeMap<Var, Var>), EngineError> {
        let (goal, rho) = {
            let g = &self.gens[gid];
            let rho: BTreeMap<Var, Var> = g
                .goal_vars
                .iter()
                .map(|v| (v.clone(), self.gensym.fresh()))
                .collect();
            (rename_literal(&g.goal, &rho), rho)
        };
        let mut base = store.clone();
        for eq in arg_equations(&lit.args, &goal.args) {
            base = base.conjoin_atom(&eq)?;
        }
        debug_assert!(
            base.is_consistent(),
            "linking a call to its own (or variant) generator cannot fail"
        );
        Ok((base, rho))
    }

    fn register_consumer(
        &mut self,
        gid: usize,
        tree: usize,
        node: usize,
        resolvent: im::Vector<BodyItem>,
        store: Store,
        rho: BTreeMap<Var, Var>,
    ) {
        let sid = self.susps.len();
        self.susps.push(Susp {
            gen: gid,
            tree,
            node,
            resolvent,
            store,
            rho,
        });
        self.gens[gid].consumers.push(sid);
        self.stats.suspensions += 1;
        for (idx, slot) in self.gens[gid].answers.iter().enumerate() {
            if !slot.removed {
                self.queue.push_back((sid, idx));
            }
        }
    }

    fn new_generator(
        &mut self,
        tree: usize,
        node: usize,
        resolved: &Literal,
        call_vars: &[Var],
        lit: &Literal,
        rest: im::Vector<BodyItem>,
        store: &Store,
    ) -> Result<(), EngineError> {
        // goal: remaining variables renamed to V0, V1, ... in first
        // occurrence order, counting across the whole run
        let mut vmap: BTreeMap<Var, Var> = BTreeMap::new();
        let mut goal_vars = Vec::new();
        for v in call_vars {
            let name: Arc<str> = Arc::from(format!("V{}", self.genvar_next));
            self.genvar_next += 1;
            let gv = Var::Named(name);
            vmap.insert(v.clone(), gv.clone());
            goal_vars.push(gv);
        }
        let goal = Literal {
            pred: resolved.pred.clone(),
            args: resolved
                .args
                .iter()
                .map(|a| crate::lang::rename_term(a, &vmap))
                .collect(),
        };
        let keep: VarSet = call_vars.iter().cloned().collect();
        let projected = apply_projection(self.cfg.call_projection, store, &keep)?;
        let c_g = projected.store.rename(&vmap)?;
        let sig = literal_sig_loose(&c_g, &goal);
        let neutral_render = neutral_store_render(&c_g, &goal_vars)?;

        let gid = self.gens.len();
        // the tree root carries the generator store with projection
        // witnesses unsealed into fresh plain variables, so clause
        // resolution cannot capture them
        let root_store = c_g.unseal_witnesses(&mut self.gensym)?;
        let mut root_resolvent = im::Vector::new();
        root_resolvent.push_back(BodyItem::Literal(goal.clone()));
        let gtree = self.trees.len();
        self.trees.push(Tree {
            gen: Some(gid),
            nodes: vec![Node {
                resolvent: root_resolvent,
                store: root_store,
                children: Vec::new(),
            }],
        });
        self.index.entry(lit.key()).or_default().insert(gid, &sig);
        self.gens.push(Gen {
            goal,
            store: c_g,
            goal_vars,
            sig,
            neutral_render,
            answers: Vec::new(),
            dup: HashSet::new(),
            wide: Vec::new(),
            consumers: Vec::new(),
            complete: false,
        });
        self.stats.generators += 1;
        self.stack.push((gtree, 0));

        // the creating call is the first consumer of its own table
        let (base, rho) = self.link_to_generator(gid, lit, store)?;
        self.register_consumer(gid, tree, node, rest, base, rho);
        Ok(())
    }

    fn deliver(&mut self, sid: usize, aidx: usize) -> Result<(), EngineError> {
        self.spend();
        self.stats.deliveries += 1;
        let (gid, tree, node, resolvent, base, mut map) = {
            let s = &self.susps[sid];
            (
                s.gen,
                s.tree,
                s.node,
                s.resolvent.clone(),
                s.store.clone(),
                s.rho.clone(),
            )
        };
        let answer = self.gens[gid].answers[aidx].store.clone();
        for w in answer.witness_vars() {
            map.insert(w, self.gensym.fresh());
        }
        let delivered = answer.rename(&map)?;
        let next = base.conjoin(&delivered)?;
        self.attach(tree, node, EdgeLabel::Answer(aidx + 1), resolvent, next, None)
    }

    /// A branch reached the empty resolvent: report a query answer or
    /// feed the owning generator's table.
    fn success(&mut self, tree: usize, store: Store) -> Result<(), EngineError> {
        match self.trees[tree].gen {
            None => {
                let projected = store.project(&self.query_vars)?;
                self.answers.push(projected);
                Ok(())
            }
            Some(gid) => self.add_answer(gid, store),
        }
    }

    fn add_answer(&mut self, gid: usize, final_store: Store) -> Result<(), EngineError> {
        let keep: VarSet = self.gens[gid].goal_vars.iter().cloned().collect();
        let projected = apply_projection(self.cfg.answer_projection, &final_store, &keep)?;
        let a = projected.store;
        let render = a.render();

        let dedup_only = self.cfg.strategy == Strategy::TabVariant;
        match self.cfg.answer_policy {
            AnswerPolicy::KeepAll if !dedup_only => {}
            _ => {
                if self.gens[gid].dup.contains(&render) {
                    self.stats.answers_discarded += 1;
                    return Ok(());
                }
            }
        }
        if !dedup_only
            && matches!(
                self.cfg.answer_policy,
                AnswerPolicy::DiscardNewEntailed | AnswerPolicy::DiscardAndRemove
            )
        {
            // only kept answers that are not point-shaped can entail a
            // new, canonically different answer
            let wide = self.gens[gid].wide.clone();
            for widx in wide {
                let slot = &self.gens[gid].answers[widx];
                if !slot.removed && a.entails(&slot.store) {
                    self.stats.answers_discarded += 1;
                    return Ok(());
                }
            }
        }

        let goal = self.gens[gid].goal.clone();
        let sig = literal_sig_loose(&a, &goal);
        let is_wide = !sig.iter().all(ArgSig::pinned);

        if !dedup_only && self.cfg.answer_policy == AnswerPolicy::DiscardAndRemove && is_wide {
            // remove kept answers the new one generalizes
            let n = self.gens[gid].answers.len();
            for idx in 0..n {
                let entailed = {
                    let slot = &self.gens[gid].answers[idx];
                    !slot.removed && slot.store.entails(&a)
                };
                if entailed {
                    let g = &mut self.gens[gid];
                    let r = g.answers[idx].render.clone();
                    g.answers[idx].removed = true;
                    g.dup.remove(&r);
                    g.wide.retain(|&w| w != idx);
                    self.stats.answers_removed += 1;
                }
            }
        }

        let g = &mut self.gens[gid];
        let idx = g.answers.len();
        g.dup.insert(render.clone());
        if is_wide {
            g.wide.push(idx);
        }
        g.answers.push(AnswerSlot {
            store: a,
            render,
            removed: false,
        });
        self.stats.answers_added += 1;
        let consumers = g.consumers.clone();
        for sid in consumers {
            self.queue.push_back((sid, idx));
        }
        Ok(())
    }

    fn finish(self, status: RunStatus) -> SolveResult {
        let mut trees_iter = self.trees.into_iter();
        let query_tree = trees_iter.next().expect("query tree exists");
        let to_record = |t: Tree, gen: Option<&Gen>| TreeRecord {
            generator: gen.map(|g| GeneratorRecord {
                literal: g.goal.clone(),
                store: g.store.clone(),
                answers: g
                    .answers
                    .iter()
                    .map(|s| AnswerRecord {
                        store: s.store.clone(),
                        kept: !s.removed,
                    })
                    .collect(),
                complete: g.complete,
            }),
            nodes: t
                .nodes
                .into_iter()
                .map(|n| NodeRecord {
                    resolvent: n.resolvent,
                    store: n.store,
                    children: n.children,
                })
                .collect(),
        };
        let gens = &self.gens;
        let trees: Vec<TreeRecord> = trees_iter
            .enumerate()
            .map(|(i, t)| to_record(t, Some(&gens[i])))
            .collect();
        SolveResult {
            answers: self.answers,
            status,
            stats: self.stats,
            forest: ForestRecord {
                query: to_record(query_tree, None),
                trees,
            },
        }
    }
}

/// Variables of a literal in first-occurrence order, duplicates
/// removed.
fn ordered_vars(lit: &Literal) -> Vec<Var> {
    let mut out = Vec::new();
    for v in lit.vars() {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Renders a store under position-neutral names for its listed
/// variables (first-occurrence order), so two stores over different
/// variables compare as variants by string equality.
fn neutral_store_render(store: &Store, vars: &[Var]) -> Result<String, EngineError> {
    let map: BTreeMap<Var, Var> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), Var::Named(Arc::from(format!("N{i}")))))
        .collect();
    Ok(store.rename(&map)?.render())
}

/// Builds a variable bijection making the two argument lists equal, if
/// one exists (ground parts must match exactly).
fn var_bijection(call: &[Term], gen: &[Term]) -> Option<BTreeMap<Var, Var>> {
    if call.len() != gen.len() {
        return None;
    }
    let mut fwd: BTreeMap<Var, Var> = BTreeMap::new();
    let mut bwd: BTreeMap<Var, Var> = BTreeMap::new();
    // iterative so deep term chains cannot overflow the stack
    let mut work: Vec<(Term, Term)> = call
        .iter()
        .cloned()
        .zip(gen.iter().cloned())
        .collect();
    while let Some((a, b)) = work.pop() {
        match (&a, &b) {
            (Term::Var(x), Term::Var(y)) => match (fwd.get(x), bwd.get(y)) {
                (None, None) => {
                    fwd.insert(x.clone(), y.clone());
                    bwd.insert(y.clone(), x.clone());
                }
                (Some(py), Some(px)) => {
                    if py != y || px != x {
                        return None;
                    }
                }
                _ => return None,
            },
            (Term::Sym(s), Term::Sym(t)) => {
                if s != t {
                    return None;
                }
            }
            (Term::Rat(r), Term::Rat(q)) => {
                if r != q {
                    return None;
                }
            }
            (Term::App(f), Term::App(g)) => {
                // cached sizes reject different shapes without a walk,
                // which keeps scans over many deep-term generators cheap
                if a.size() != b.size()
                    || f.functor != g.functor
                    || f.args.len() != g.args.len()
                {
                    return None;
                }
                if f.is_ground() || g.is_ground() {
                    // a ground term is a variant only of itself
                    if a != b {
                        return None;
                    }
                    continue;
                }
                for pair in f.args.iter().cloned().zip(g.args.iter().cloned()) {
                    work.push(pair);
                }
            }
            _ => return None,
        }
    }
    Some(fwd)
}

// ---------------------------------------------------------------------
// The four-strategy comparison matrix over the distance corpus
// ---------------------------------------------------------------------

/// Builds the distance program for one strategy and graph. Strategies
/// run their conventional encoding: `lp` and `tab-variant` place the
/// arithmetic after the calls, `clp` and `tclp` before them.
pub fn dist_program_text(strategy: Strategy, recursion: &str, graph: &str) -> String {
    let clause = match (strategy, recursion) {
        (Strategy::Lp | Strategy::TabVariant, "left") => {
            "dist(X, Y, D) :- dist(X, Z, D1), edge(Z, Y, D2), {D = D1 + D2}."
        }
        (Strategy::Lp | Strategy::TabVariant, "right") => {
            "dist(X, Y, D) :- edge(X, Z, D1), dist(Z, Y, D2), {D = D1 + D2}."
        }
        (Strategy::Clp | Strategy::Tclp, "left") => {
            "dist(X, Y, D) :- {D1 > 0, D2 > 0, D = D1 + D2}, dist(X, Z, D1), edge(Z, Y, D2)."
        }
        (Strategy::Clp | Strategy::Tclp, "right") => {
            "dist(X, Y, D) :- {D1 > 0, D2 > 0, D = D1 + D2}, edge(X, Z, D1), dist(Z, Y, D2)."
        }
        _ => panic!("recursion must be `left` or `right`"),
    };
    let edges = match graph {
        "acyclic" => "edge(a, b, 50).\nedge(b, c, 30).",
        "cyclic" => "edge(a, b, 50).\nedge(b, a, W) :- {W > 25, W < 35}.",
        _ => panic!("graph must be `acyclic` or `cyclic`"),
    };
    format!(
        ":- solver(linq).\n:- table dist/3.\n{clause}\ndist(X, Y, D) :- edge(X, Y, D).\n{edges}\n"
    )
}

pub const DIST_QUERY: &str = "?- {D < 150}, dist(a, Y, D).";

#[derive(Clone, Debug)]
pub struct MatrixCell {
    pub graph: &'static str,
    pub recursion: &'static str,
    pub strategy: Strategy,
    pub status: RunStatus,
    pub answers: Vec<String>,
    pub transitions: u64,
}

#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub budget: u64,
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:<10} {:<18} {:<18} {:<18} {:<18}\n",
            "graph", "recursion", "lp", "clp", "tab-variant", "tclp"
        ));
        for graph in ["acyclic", "cyclic"] {
            for recursion in ["left", "right"] {
                let mut row = format!("{graph:<8} {recursion:<10} ");
                for strategy in [
                    Strategy::Lp,
                    Strategy::Clp,
                    Strategy::TabVariant,
                    Strategy::Tclp,
                ] {
                    let cell = self
                        .cells
                        .iter()
                        .find(|c| {
                            c.graph == graph && c.recursion == recursion && c.strategy == strategy
                        })
                        .expect("matrix covers all 16 cells");
                    let text = match cell.status {
                        RunStatus::Complete => format!("complete({})", cell.answers.len()),
                        RunStatus::BudgetExceeded => "budget-exceeded".to_string(),
                    };
                    row.push_str(&format!("{text:<18} "));
                }
                out.push_str(row.trim_end());
                out.push('\n');
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
                    "graph": c.graph,
                    "recursion": c.recursion,
                    "strategy": c.strategy.name(),
                    "status": c.status.name(),
                    "answers": c.answers,
                    "transitions": c.transitions,
                })
            })
            .collect();
        json!({"budget": self.budget, "cells": cells})
    }
}

/// Runs all 16 strategy/graph/recursion combinations of the distance
/// corpus under the standard query.
pub fn run_matrix(budget: u64) -> Result<MatrixReport, EngineError> {
    let query = crate::lang::parse_query(DIST_QUERY).expect("matrix query parses");
    let mut cells = Vec::new();
    for graph in ["acyclic", "cyclic"] {
        for recursion in ["left", "right"] {
            for strategy in [
                Strategy::Lp,
                Strategy::Clp,
                Strategy::TabVariant,
                Strategy::Tclp,
            ] {
                let text = dist_program_text(strategy, recursion, graph);
                let program =
                    crate::lang::parse_program(&text).expect("matrix program parses");
                let cfg = EngineConfig {
                    strategy,
                    budget,
                    ..EngineConfig::default()
                };
                let result = solve(&program, &query, &cfg)?;
                cells.push(MatrixCell {
                    graph,
                    recursion,
                    strategy,
                    status: result.status,
                    answers: result.rendered_answers(),
                    transitions: result.stats.transitions,
                });
            }
        }
    }
    Ok(MatrixReport { budget, cells })
}
