//! Gap-order constraints over the integers.
//!
//! A store is a weighted digraph over the constrained variables plus a
//! distinguished zero node: an edge `x -> y` of weight `w` means
//! `y - x > w`. The graph is kept transitively closed under the
//! integer tightening `w(x,z) >= w(x,y) + w(y,z) + 1`, so consistency
//! is just the absence of a self-loop of weight `>= 0`, entailment is
//! edge-wise weight comparison, and projection restricts the closed
//! graph to the kept nodes. Weights may be negative internally (bounds
//! and near-equalities need them); equations enter as a pair of `-1`
//! edges, which is exact over the integers.

use std::collections::BTreeMap;

use num::{BigRational, ToPrimitive};

use crate::lang::{ConstraintAtom, RelOp, Term, Var};
use crate::store::{SolverError, Valuation, Value, VarSet};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Node {
    Zero,
    Var(Var),
}

#[derive(Clone, Debug)]
pub struct GapStore {
    inconsistent: bool,
    edges: im::OrdMap<(Node, Node), i64>,
}

/// One side of a source atom reduced to `var + offset` or a constant.
#[derive(Clone)]
struct Side {
    var: Option<Var>,
    offset: i64,
}

impl Side {
    fn shifted(&self, k: i64) -> Side {
        Side {
            var: self.var.clone(),
            offset: self.offset + k,
        }
    }
}

impl GapStore {
    pub fn top() -> GapStore {
        GapStore {
            inconsistent: false,
            edges: im::OrdMap::new(),
        }
    }

    pub fn bottom() -> GapStore {
        GapStore {
            inconsistent: true,
            edges: im::OrdMap::new(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    fn gap(&self, a: &Node, b: &Node) -> Option<i64> {
        self.edges.get(&(a.clone(), b.clone())).copied()
    }

    /// Adds `b - a > w` and restores closure by composing every path
    /// through the new edge once (sufficient when the graph was closed).
    fn add_edge(&mut self, a: Node, b: Node, w: i64) {
        if self.inconsistent {
            return;
        }
        if a == b {
            if w >= 0 {
                self.inconsistent = true;
            }
            return;
        }
        if self.gap(&a, &b).is_some_and(|old| old >= w) {
            return;
        }
        // predecessors of a and successors of b, with the node itself as
        // the composition identity (gap -1)
        let mut preds: Vec<(Node, i64)> = vec![(a.clone(), -1)];
        let mut succs: Vec<(Node, i64)> = vec![(b.clone(), -1)];
        for ((x, y), g) in self.edges.iter() {
            if *y == a {
                preds.push((x.clone(), *g));
            }
            if *x == b {
                succs.push((y.clone(), *g));
            }
        }
        for (u, wu) in &preds {
            for (v, wv) in &succs {
                let g = wu + w + wv + 2;
                if u == v {
                    if g >= 0 {
                        self.inconsistent = true;
                        return;
                    }
                    continue;
                }
                let key = (u.clone(), v.clone());
                if self.edges.get(&key).is_none_or(|old| *old < g) {
                    self.edges.insert(key, g);
                }
            }
        }
    }

    pub fn conjoin_atom(&self, atom: &ConstraintAtom) -> Result<GapStore, SolverError> {
        let lhs = side(&atom.lhs, atom)?;
        let rhs = side(&atom.rhs, atom)?;
        let mut next = self.clone();
        // reduce to strict inequalities between integer-offset sides;
        // over the integers, a =< b is a < b + 1 and a = b is both
        match atom.op {
            RelOp::Lt => next.add_side_lt(lhs, rhs),
            RelOp::Gt => next.add_side_lt(rhs, lhs),
            RelOp::Le => next.add_side_lt(lhs, rhs.shifted(1)),
            RelOp::Ge => next.add_side_lt(rhs, lhs.shifted(1)),
            RelOp::Eq => {
                next.add_side_lt(lhs.clone(), rhs.shifted(1));
                next.add_side_lt(rhs, lhs.shifted(1));
            }
        }
        Ok(next)
    }

    fn add_side_lt(&mut self, l: Side, r: Side) {
        match (l.var, r.var) {
            (Some(x), Some(y)) => {
                self.add_edge(Node::Var(x), Node::Var(y), l.offset - r.offset)
            }
            (Some(x), None) => {
                // x + o < c  ⇔  0 - x > o - c
                self.add_edge(Node::Var(x), Node::Zero, l.offset - r.offset)
            }
            (None, Some(y)) => self.add_edge(Node::Zero, Node::Var(y), l.offset - r.offset),
            (None, None) => {
                if l.offset >= r.offset {
                    self.inconsistent = true;
                }
            }
        }
    }

    pub fn conjoin(&self, other: &GapStore) -> GapStore {
        if self.inconsistent || other.inconsistent {
            return GapStore::bottom();
        }
        let mut acc = self.clone();
        for ((a, b), w) in other.edges.iter() {
            acc.add_edge(a.clone(), b.clone(), *w);
            if acc.inconsistent {
                break;
            }
        }
        acc
    }

    pub fn entails(&self, other: &GapStore) -> bool {
        if self.inconsistent {
            return true;
        }
        if other.inconsistent {
            return false;
        }
        other
            .edges
            .iter()
            .all(|((a, b), w)| self.gap(a, b).is_some_and(|g| g >= *w))
    }

    pub fn project(&self, keep: &VarSet) -> GapStore {
        if self.inconsistent {
            return GapStore::bottom();
        }
        let kept = |n: &Node| match n {
            Node::Zero => true,
            Node::Var(v) => keep.contains(v),
        };
        let edges = self
            .edges
            .iter()
            .filter(|((a, b), _)| kept(a) && kept(b))
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        GapStore {
            inconsistent: false,
            edges,
        }
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> GapStore {
        let ren = |n: &Node| match n {
            Node::Zero => Node::Zero,
            Node::Var(v) => Node::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
        };
        let edges = self
            .edges
            .iter()
            .map(|((a, b), w)| ((ren(a), ren(b)), *w))
            .collect();
        GapStore {
            inconsistent: self.inconsistent,
            edges,
        }
    }

    pub fn vars(&self) -> VarSet {
        let mut out = VarSet::new();
        for ((a, b), _) in self.edges.iter() {
            for n in [a, b] {
                if let Node::Var(v) = n {
                    out.insert(v.clone());
                }
            }
        }
        out
    }

    pub fn render_atoms(&self) -> Vec<String> {
        let name = |n: &Node| match n {
            Node::Zero => "0".to_string(),
            Node::Var(v) => v.to_string(),
        };
        let mut atoms = Vec::new();
        let mut fused: Vec<(Node, Node)> = Vec::new();
        for ((a, b), w) in self.edges.iter() {
            if fused.contains(&(a.clone(), b.clone())) {
                continue;
            }
            // a pinned difference renders as one equation
            if let Some(back) = self.gap(b, a) {
                if w + back == -2 {
                    fused.push((b.clone(), a.clone()));
                    let k = w + 1; // b - a exactly
                    let (lo, hi, k) = if k >= 0 { (a, b, k) } else { (b, a, -k) };
                    atoms.push(match (lo, hi, k) {
                        (Node::Zero, h, k) => format!("{} = {}", name(h), k),
                        (l, Node::Zero, k) => format!("{} = {}", name(l), -k),
                        (l, h, 0) => {
                            let (x, y) = if name(l) < name(h) { (l, h) } else { (h, l) };
                            format!("{} = {}", name(y), name(x))
                        }
                        (l, h, k) => format!("{} = {} + {}", name(h), name(l), k),
                    });
                    continue;
                }
            }
            atoms.push(match (a, b, *w) {
                (Node::Zero, y, w) => format!("{} < {}", w, name(y)),
                (x, Node::Zero, w) => format!("{} < {}", name(x), -w),
                (x, y, 0) => format!("{} < {}", name(x), name(y)),
                (x, y, w) if w > 0 => format!("{} + {} < {}", name(x), w, name(y)),
                (x, y, w) => format!("{} < {} + {}", name(x), name(y), -w),
            });
        }
        atoms.sort();
        atoms
    }

    pub fn satisfies(&self, val: &Valuation) -> Option<bool> {
        if self.inconsistent {
            return Some(false);
        }
        let value = |n: &Node| -> Option<i64> {
            match n {
                Node::Zero => Some(0),
                Node::Var(v) => match val.get(v) {
                    Some(Value::Int(k)) => Some(*k),
                    _ => None,
                },
            }
        };
        for ((a, b), w) in self.edges.iter() {
            if value(b)? - value(a)? <= *w {
                return Some(false);
            }
        }
        Some(true)
    }

    /// An integer model: start every variable at its tightest admissible
    /// bound and relax along edges (longest path; positive cycles are
    /// ruled out by consistency).
    pub fn model(&self) -> Option<BTreeMap<Var, i64>> {
        if self.inconsistent {
            return None;
        }
        let vars: Vec<Var> = self.vars().into_iter().collect();
        let mut val: BTreeMap<Var, i64> = BTreeMap::new();
        for v in &vars {
            let lo = self.gap(&Node::Zero, &Node::Var(v.clone())).map(|w| w + 1);
            let hi = self.gap(&Node::Var(v.clone()), &Node::Zero).map(|w| -w - 1);
            val.insert(v.clone(), lo.or(hi).unwrap_or(0));
        }
        for _ in 0..=vars.len() {
            let mut changed = false;
            for ((a, b), w) in self.edges.iter() {
                if let (Node::Var(x), Node::Var(y)) = (a, b) {
                    let need = val[x] + w + 1;
                    if val[y] < need {
                        val.insert(y.clone(), need);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        debug_assert_eq!(
            self.satisfies(&val.iter().map(|(v, k)| (v.clone(), Value::Int(*k))).collect()),
            Some(true),
            "closed consistent gap graph must admit its relaxation model"
        );
        Some(val)
    }

    /// The exact value of `v` when the store pins it, for display.
    pub fn point_value(&self, v: &Var) -> Option<i64> {
        let lo = self.gap(&Node::Zero, &Node::Var(v.clone())).map(|w| w + 1)?;
        let hi = self.gap(&Node::Var(v.clone()), &Node::Zero).map(|w| -w - 1)?;
        (lo == hi).then_some(lo)
    }

    /// Inclusive integer bounds `(lo, hi)` implied against the zero
    /// node: `lo` means `v >= lo`, `hi` means `v <= hi`.
    pub fn bounds_of(&self, v: &Var) -> (Option<i64>, Option<i64>) {
        if self.inconsistent {
            return (None, None);
        }
        let lo = self.gap(&Node::Zero, &Node::Var(v.clone())).map(|w| w + 1);
        let hi = self.gap(&Node::Var(v.clone()), &Node::Zero).map(|w| -w - 1);
        (lo, hi)
    }
}

fn side(t: &Term, atom: &ConstraintAtom) -> Result<Side, SolverError> {
    let malformed = || SolverError::MalformedGapAtom(atom.to_string());
    let int_of = |r: &BigRational| -> Result<i64, SolverError> {
        if r.is_integer() {
            r.to_integer().to_i64().ok_or_else(malformed)
        } else {
            Err(malformed())
        }
    };
    match t {
        Term::Var(v) => Ok(Side {
            var: Some(v.clone()),
            offset: 0,
        }),
        Term::Rat(r) => Ok(Side {
            var: None,
            offset: int_of(r)?,
        }),
        Term::App(app) => match (&*app.functor, app.args.as_slice()) {
            ("+", [Term::Var(v), Term::Rat(r)]) | ("+", [Term::Rat(r), Term::Var(v)]) => {
                Ok(Side {
                    var: Some(v.clone()),
                    offset: int_of(r)?,
                })
            }
            ("-", [Term::Var(v), Term::Rat(r)]) => Ok(Side {
                var: Some(v.clone()),
                offset: -int_of(r)?,
            }),
            ("-", [Term::Rat(r)]) => Ok(Side {
                var: None,
                offset: -int_of(r)?,
            }),
            _ => Err(malformed()),
        },
        Term::Sym(_) => Err(malformed()),
    }
}
