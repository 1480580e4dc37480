//! Canonical view of a consistent linear store: the affine hull as a
//! reduced row echelon system, a minimal irredundant set of facet
//! inequalities, plus alias and symbol bindings. Equal stores (mutual
//! entailment) produce identical canonical views, so rendering doubles
//! as an equality key.

use std::collections::BTreeSet;
use std::sync::Arc;

use num::{BigRational, One, Signed, Zero};

use crate::lang::Var;
use crate::store::SolverError;

use super::solve::{is_unsat, LinRel, Norm, Row};

#[derive(Clone, Debug)]
pub(crate) struct CanonLin {
    /// `(member, representative)` with member > representative.
    pub aliases: Vec<(Var, Var)>,
    pub syms: Vec<(Var, Arc<str>)>,
    /// RREF equations: pivot is the smallest variable, coefficient one.
    pub eqs: Vec<Row>,
    /// Irredundant facets over the non-pivot variables.
    pub ineqs: Vec<Row>,
}

/// Reduced row echelon form over columns ordered by variable. The
/// result is unique for the solution space, independent of input order.
fn rref(eqs: Vec<Row>) -> Vec<Row> {
    let mut rows: Vec<Row> = Vec::new();
    for r in eqs {
        if let Norm::Keep(r) = r.normalized() {
            rows.push(r);
        }
    }
    let columns: BTreeSet<Var> = rows.iter().flat_map(|r| r.terms.keys().cloned()).collect();
    let mut done: Vec<Row> = Vec::new();
    for v in columns {
        let Some(i) = rows.iter().position(|r| r.terms.contains_key(&v)) else {
            continue;
        };
        let mut pivot = rows.remove(i);
        let c = pivot.terms[&v].clone();
        pivot = scale_row(&pivot, &(BigRational::one() / c));
        let reduce = |r: &Row| -> Option<Row> {
            let k = r.terms.get(&v)?.clone();
            Some(sub_scaled(r, &k, &pivot))
        };
        for r in rows.iter_mut() {
            if let Some(next) = reduce(r) {
                *r = next;
            }
        }
        for r in done.iter_mut() {
            if let Some(next) = reduce(r) {
                *r = next;
            }
        }
        rows.retain(|r| {
            if r.terms.is_empty() {
                debug_assert!(r.rhs.is_zero(), "contradictory equation in rref");
                false
            } else {
                true
            }
        });
        done.push(pivot);
    }
    done
}

fn scale_row(r: &Row, k: &BigRational) -> Row {
    Row {
        terms: r.terms.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
        rel: r.rel,
        rhs: &r.rhs * k,
    }
}

/// `r - k·eq`, dropping zeroed coefficients.
fn sub_scaled(r: &Row, k: &BigRational, eq: &Row) -> Row {
    let mut terms = r.terms.clone();
    for (v, c) in &eq.terms {
        let cur = terms.remove(v).unwrap_or_else(BigRational::zero);
        let next = cur - c * k;
        if !next.is_zero() {
            terms.insert(v.clone(), next);
        }
    }
    Row {
        terms,
        rel: r.rel,
        rhs: &r.rhs - &eq.rhs * k,
    }
}

fn substitute(ineq: &Row, eqs: &[Row]) -> Row {
    let mut cur = ineq.clone();
    for eq in eqs {
        let pivot = eq.terms.keys().next().expect("pivot row has terms");
        if let Some(k) = cur.terms.get(pivot).cloned() {
            cur = sub_scaled(&cur, &k, eq);
        }
    }
    cur
}

/// Scale so the coefficient of the largest variable has absolute value
/// one; the relation never flips (scaling is positive).
fn normalize_scale(r: &Row) -> Row {
    match r.terms.values().next_back() {
        Some(c) if !c.abs().is_one() => scale_row(r, &(BigRational::one() / c.abs())),
        _ => r.clone(),
    }
}

/// Builds the canonical view from resolved primitive parts. The row set
/// must be consistent (callers only canonicalize consistent stores).
pub(crate) fn canonicalize(
    aliases: Vec<(Var, Var)>,
    syms: Vec<(Var, Arc<str>)>,
    rows: Vec<Row>,
    cap: usize,
) -> Result<CanonLin, SolverError> {
    let mut eqs: Vec<Row> = Vec::new();
    let mut ineqs: Vec<Row> = Vec::new();
    for r in rows {
        match r.normalized() {
            Norm::Keep(r) if r.rel == LinRel::Eq => eqs.push(r),
            Norm::Keep(r) => ineqs.push(r),
            Norm::Tauto => {}
            Norm::Contra => unreachable!("canonicalizing an inconsistent store"),
        }
    }
    // fuse implied equalities: an inequality whose reverse is entailed
    // by the rest lies on the affine hull
    loop {
        eqs = rref(eqs);
        let mut next: Vec<Row> = Vec::new();
        for r in &ineqs {
            match substitute(r, &eqs).normalized() {
                Norm::Keep(r) => next.push(r),
                Norm::Tauto => {}
                Norm::Contra => unreachable!("canonicalizing an inconsistent store"),
            }
        }
        next.sort();
        next.dedup();
        ineqs = next;
        let mut fused = None;
        for (i, r) in ineqs.iter().enumerate() {
            if r.rel != LinRel::Le {
                continue;
            }
            // entailed reverse: rest ∧ (t < rhs) unsatisfiable
            let mut test: Vec<Row> = ineqs.clone();
            test[i] = Row {
                terms: r.terms.clone(),
                rel: LinRel::Lt,
                rhs: r.rhs.clone(),
            };
            if is_unsat(test, cap)? {
                fused = Some(i);
                break;
            }
        }
        match fused {
            Some(i) => {
                let mut eq = ineqs.remove(i);
                eq.rel = LinRel::Eq;
                eqs.push(eq);
            }
            None => break,
        }
    }
    // drop redundant facets
    let mut i = 0;
    while i < ineqs.len() {
        let mut others: Vec<Row> = ineqs.clone();
        let candidate = others.remove(i);
        others.push(candidate.negated());
        if is_unsat(others, cap)? {
            ineqs.remove(i);
        } else {
            i += 1;
        }
    }
    let mut ineqs: Vec<Row> = ineqs.iter().map(normalize_scale).collect();
    ineqs.sort();
    let mut aliases = aliases;
    aliases.sort();
    let mut syms = syms;
    syms.sort();
    Ok(CanonLin {
        aliases,
        syms,
        eqs,
        ineqs,
    })
}

impl CanonLin {
    pub fn render_atoms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (member, rep) in &self.aliases {
            out.push(format!("{member} = {rep}"));
        }
        for (v, s) in &self.syms {
            out.push(format!("{v} = {s}"));
        }
        for eq in &self.eqs {
            out.push(render_eq(eq));
        }
        for r in &self.ineqs {
            out.push(render_ineq(r));
        }
        out.sort();
        out
    }

    /// Point and interval bounds on a single variable, read off the
    /// canonical rows: `(point, lower, upper)`, bounds paired with
    /// strictness.
    #[allow(clippy::type_complexity)]
    pub fn interval_of(
        &self,
        v: &Var,
    ) -> (
        Option<BigRational>,
        Option<(BigRational, bool)>,
        Option<(BigRational, bool)>,
    ) {
        let mut point = None;
        for eq in &self.eqs {
            if eq.terms.len() == 1 {
                if let Some(c) = eq.terms.get(v) {
                    point = Some(&eq.rhs / c);
                }
            }
        }
        let mut lo = None;
        let mut hi = None;
        for r in &self.ineqs {
            if r.terms.len() != 1 {
                continue;
            }
            let Some(c) = r.terms.get(v) else { continue };
            let bound = &r.rhs / c;
            let strict = r.rel == LinRel::Lt;
            if c.is_positive() {
                hi = Some((bound, strict));
            } else {
                lo = Some((bound, strict));
            }
        }
        (point, lo, hi)
    }
}

/// `"U3 + 50"`, `"3/2*Y - Z + 1/2"`, `"-5"`: terms in variable order,
/// unit coefficients bare, constant last.
fn render_expr(terms: &[(Var, BigRational)], konst: &BigRational) -> String {
    let mut s = String::new();
    for (v, c) in terms {
        if s.is_empty() {
            if c.abs().is_one() {
                if c.is_negative() {
                    s.push('-');
                }
            } else {
                s.push_str(&format!("{c}*"));
            }
        } else {
            s.push_str(if c.is_negative() { " - " } else { " + " });
            if !c.abs().is_one() {
                s.push_str(&format!("{}*", c.abs()));
            }
        }
        s.push_str(&v.to_string());
    }
    if s.is_empty() {
        return konst.to_string();
    }
    if !konst.is_zero() {
        s.push_str(if konst.is_negative() { " - " } else { " + " });
        s.push_str(&konst.abs().to_string());
    }
    s
}

/// Pivot isolated on the left: `W3 = U3 + 50`.
fn render_eq(eq: &Row) -> String {
    let mut it = eq.terms.iter();
    let (pivot, pc) = it.next().expect("equation with no terms");
    debug_assert!(pc.is_one());
    let rest: Vec<(Var, BigRational)> = it.map(|(v, c)| (v.clone(), -c)).collect();
    format!("{pivot} = {}", render_expr(&rest, &eq.rhs))
}

/// Positive coefficients left, negative moved right: `D2 < W3 - 50`,
/// `X > 3` when the left side would otherwise be empty.
fn render_ineq(r: &Row) -> String {
    let pos: Vec<(Var, BigRational)> = r
        .terms
        .iter()
        .filter(|(_, c)| c.is_positive())
        .map(|(v, c)| (v.clone(), c.clone()))
        .collect();
    let neg: Vec<(Var, BigRational)> = r
        .terms
        .iter()
        .filter(|(_, c)| c.is_negative())
        .map(|(v, c)| (v.clone(), -c))
        .collect();
    if pos.is_empty() {
        let op = if r.rel == LinRel::Lt { ">" } else { ">=" };
        return format!(
            "{} {op} {}",
            render_expr(&neg, &BigRational::zero()),
            render_expr(&[], &-&r.rhs)
        );
    }
    let op = if r.rel == LinRel::Lt { "<" } else { "=<" };
    format!(
        "{} {op} {}",
        render_expr(&pos, &BigRational::zero()),
        render_expr(&neg, &r.rhs)
    )
}
