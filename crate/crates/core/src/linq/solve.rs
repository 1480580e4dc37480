//! Linear-rational elimination core: Gauss substitution for equations,
//! Fourier-Motzkin for inequalities, plus model extraction by
//! back-solving. Everything is exact `BigRational` arithmetic.

use std::collections::BTreeMap;

use num::{BigRational, Signed, Zero};

use crate::lang::Var;
use crate::store::SolverError;

/// Hard limit on the row count a single elimination step may produce.
pub(crate) const ELIM_CAP: usize = 10_000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub(crate) enum LinRel {
    Lt,
    Le,
    Eq,
}

/// `terms · x  rel  rhs` with nonzero coefficients only.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub(crate) struct Row {
    pub terms: BTreeMap<Var, BigRational>,
    pub rel: LinRel,
    pub rhs: BigRational,
}

pub(crate) enum Norm {
    Keep(Row),
    Tauto,
    Contra,
}

impl Row {
    pub fn normalized(mut self) -> Norm {
        self.terms.retain(|_, c| !c.is_zero());
        if !self.terms.is_empty() {
            return Norm::Keep(self);
        }
        let zero = BigRational::zero();
        let holds = match self.rel {
            LinRel::Lt => zero < self.rhs,
            LinRel::Le => zero <= self.rhs,
            LinRel::Eq => zero == self.rhs,
        };
        if holds {
            Norm::Tauto
        } else {
            Norm::Contra
        }
    }

    fn scaled(&self, k: &BigRational) -> Row {
        debug_assert!(k.is_positive() || self.rel == LinRel::Eq);
        Row {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            rel: self.rel,
            rhs: &self.rhs * k,
        }
    }

    /// `self - k * eq_row`; `eq_row` must be an equation.
    fn minus(&self, k: &BigRational, eq: &Row) -> Row {
        debug_assert_eq!(eq.rel, LinRel::Eq);
        let mut terms = self.terms.clone();
        for (v, c) in &eq.terms {
            let cur = terms.remove(v).unwrap_or_else(BigRational::zero);
            let next = cur - c * k;
            if !next.is_zero() {
                terms.insert(v.clone(), next);
            }
        }
        Row {
            terms,
            rel: self.rel,
            rhs: &self.rhs - &eq.rhs * k,
        }
    }

    pub fn evaluate(&self, val: &BTreeMap<Var, BigRational>) -> Option<bool> {
        let mut acc = BigRational::zero();
        for (v, c) in &self.terms {
            acc += c * val.get(v)?;
        }
        Some(match self.rel {
            LinRel::Lt => acc < self.rhs,
            LinRel::Le => acc <= self.rhs,
            LinRel::Eq => acc == self.rhs,
        })
    }

    /// The negation as a row: `¬(t < c)` is `t >= c`, i.e. `-t <= -c`.
    /// Equations have no single-row negation; callers split them.
    pub fn negated(&self) -> Row {
        debug_assert_ne!(self.rel, LinRel::Eq);
        Row {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), -c)).collect(),
            rel: if self.rel == LinRel::Lt {
                LinRel::Le
            } else {
                LinRel::Lt
            },
            rhs: -&self.rhs,
        }
    }
}

#[derive(Debug)]
pub(crate) enum Reduced {
    Unsat,
    Rows(Vec<Row>),
}

fn tidy(rows: Vec<Row>) -> Reduced {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        match r.normalized() {
            Norm::Keep(r) => out.push(r),
            Norm::Tauto => {}
            Norm::Contra => return Reduced::Unsat,
        }
    }
    out.sort();
    out.dedup();
    Reduced::Rows(out)
}

/// Eliminates one variable. Prefers Gauss substitution through an
/// equation; otherwise combines lower and upper Fourier-Motzkin bounds,
/// keeping the strictest relation of each pair.
fn eliminate_one(rows: Vec<Row>, x: &Var, cap: usize) -> Result<Reduced, SolverError> {
    if let Some(pos) = rows
        .iter()
        .position(|r| r.rel == LinRel::Eq && r.terms.contains_key(x))
    {
        let pivot = rows[pos].clone();
        let pc = pivot.terms[x].clone();
        let out = rows
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, r)| match r.terms.get(x) {
                Some(c) => {
                    let k = c / &pc;
                    r.minus(&k, &pivot)
                }
                None => r,
            })
            .collect();
        return Ok(tidy(out));
    }
    let mut lowers: Vec<Row> = Vec::new(); // x >(=) expr, stored as the original row
    let mut uppers: Vec<Row> = Vec::new();
    let mut rest: Vec<Row> = Vec::new();
    for r in rows {
        match r.terms.get(x) {
            None => rest.push(r),
            Some(c) if c.is_positive() => uppers.push(r),
            Some(_) => lowers.push(r),
        }
    }
    let combos = lowers.len() * uppers.len();
    if rest.len() + combos > cap {
        return Err(SolverError::EliminationBlowup {
            atoms: rest.len() + combos,
            cap,
        });
    }
    for lo in &lowers {
        for up in &uppers {
            // lo: a·x + t rel r with a < 0; up: b·x + s rel q with b > 0.
            // Cancelling x: b·t + |a|·s rel b·r + |a|·q.
            let a = lo.terms[x].abs();
            let b = up.terms[x].clone();
            let rel = if lo.rel == LinRel::Lt || up.rel == LinRel::Lt {
                LinRel::Lt
            } else {
                LinRel::Le
            };
            let mut terms: BTreeMap<Var, BigRational> = BTreeMap::new();
            for (v, c) in &lo.terms {
                if v != x {
                    terms.insert(v.clone(), c * &b);
                }
            }
            for (v, c) in &up.terms {
                if v != x {
                    let cur = terms.remove(v).unwrap_or_else(BigRational::zero);
                    let next = cur + c * &a;
                    if !next.is_zero() {
                        terms.insert(v.clone(), next);
                    }
                }
            }
            rest.push(Row {
                terms,
                rel,
                rhs: &lo.rhs * &b + &up.rhs * &a,
            });
        }
    }
    Ok(tidy(rest))
}

/// Existentially eliminates every variable selected by `kill`.
pub(crate) fn eliminate(
    rows: Vec<Row>,
    kill: &dyn Fn(&Var) -> bool,
    cap: usize,
) -> Result<Reduced, SolverError> {
    let mut rows = match tidy(rows) {
        Reduced::Unsat => return Ok(Reduced::Unsat),
        Reduced::Rows(rs) => rs,
    };
    loop {
        let next = rows
            .iter()
            .flat_map(|r| r.terms.keys())
            .find(|v| kill(v))
            .cloned();
        let Some(x) = next else {
            return Ok(Reduced::Rows(rows));
        };
        match eliminate_one(rows, &x, cap)? {
            Reduced::Unsat => return Ok(Reduced::Unsat),
            Reduced::Rows(rs) => rows = rs,
        }
    }
}

pub(crate) fn is_unsat(rows: Vec<Row>, cap: usize) -> Result<bool, SolverError> {
    Ok(matches!(eliminate(rows, &|_| true, cap)?, Reduced::Unsat))
}

/// Finds a rational model, or `None` when unsatisfiable. Eliminates one
/// variable, solves the rest, then back-solves the variable from its
/// bounds evaluated at the partial model (density of the rationals
/// guarantees a strict midpoint exists).
pub(crate) fn solve(
    rows: Vec<Row>,
    cap: usize,
) -> Result<Option<BTreeMap<Var, BigRational>>, SolverError> {
    let rows = match tidy(rows) {
        Reduced::Unsat => return Ok(None),
        Reduced::Rows(rs) => rs,
    };
    let Some(x) = rows.iter().flat_map(|r| r.terms.keys()).next().cloned() else {
        return Ok(Some(BTreeMap::new()));
    };
    let reduced = match eliminate_one(rows.clone(), &x, cap)? {
        Reduced::Unsat => return Ok(None),
        Reduced::Rows(rs) => rs,
    };
    let Some(mut model) = solve(reduced, cap)? else {
        return Ok(None);
    };
    let mut lo: Option<(BigRational, bool)> = None; // (bound, strict)
    let mut hi: Option<(BigRational, bool)> = None;
    let mut pin: Option<BigRational> = None;
    for r in &rows {
        let Some(c) = r.terms.get(&x) else { continue };
        // value of the bound expression: (rhs - rest) / c
        let mut rest = BigRational::zero();
        for (v, cv) in &r.terms {
            if v != &x {
                rest += cv * model.get(v).expect("back-solve saw an unsolved variable");
            }
        }
        let bound = (&r.rhs - rest) / c;
        match (r.rel, c.is_positive()) {
            (LinRel::Eq, _) => pin = Some(bound),
            (rel, true) => {
                let strict = rel == LinRel::Lt;
                if hi.as_ref().is_none_or(|(b, s)| bound < *b || (bound == *b && strict && !s)) {
                    hi = Some((bound, strict));
                }
            }
            (rel, false) => {
                let strict = rel == LinRel::Lt;
                if lo.as_ref().is_none_or(|(b, s)| bound > *b || (bound == *b && strict && !s)) {
                    lo = Some((bound, strict));
                }
            }
        }
    }
    let one = BigRational::from_integer(1.into());
    let value = if let Some(p) = pin {
        p
    } else {
        match (lo, hi) {
            (None, None) => BigRational::zero(),
            (Some((l, _)), None) => l + &one,
            (None, Some((h, _))) => h - &one,
            (Some((l, ls)), Some((h, hs))) => {
                debug_assert!(l < h || (l == h && !ls && !hs));
                if l == h {
                    l
                } else {
                    (l + h) / BigRational::from_integer(2.into())
                }
            }
        }
    };
    model.insert(x, value);
    debug_assert!(rows.iter().all(|r| r.evaluate(&model) == Some(true)));
    Ok(Some(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn row(terms: &[(&str, i64)], rel: LinRel, rhs: i64) -> Row {
        Row {
            terms: terms
                .iter()
                .map(|(v, c)| (Var::named(v), rat(*c)))
                .collect(),
            rel,
            rhs: rat(rhs),
        }
    }

    #[test]
    fn gauss_substitution_prefers_equations() {
        // x = y + 1, x < 5  gives  y < 4
        let rows = vec![
            row(&[("X", 1), ("Y", -1)], LinRel::Eq, 1),
            row(&[("X", 1)], LinRel::Lt, 5),
        ];
        let out = eliminate(rows, &|v| *v == Var::named("X"), ELIM_CAP).unwrap();
        match out {
            Reduced::Rows(rs) => {
                assert_eq!(rs, vec![row(&[("Y", 1)], LinRel::Lt, 4)]);
            }
            Reduced::Unsat => panic!("satisfiable"),
        }
    }

    #[test]
    fn fourier_motzkin_combines_bound_pairs() {
        // 2 < x, x =< y eliminate x: 2 < y
        let rows = vec![
            row(&[("X", -1)], LinRel::Lt, -2),
            row(&[("X", 1), ("Y", -1)], LinRel::Le, 0),
        ];
        match eliminate(rows, &|v| *v == Var::named("X"), ELIM_CAP).unwrap() {
            Reduced::Rows(rs) => assert_eq!(rs, vec![row(&[("Y", -1)], LinRel::Lt, -2)]),
            Reduced::Unsat => panic!("satisfiable"),
        }
    }

    #[test]
    fn strictness_is_preserved_through_unsat_detection() {
        // x < 3 and x >= 3 has no solution; x =< 3 does
        assert!(is_unsat(
            vec![
                row(&[("X", 1)], LinRel::Lt, 3),
                row(&[("X", -1)], LinRel::Le, -3),
            ],
            ELIM_CAP
        )
        .unwrap());
        assert!(!is_unsat(
            vec![
                row(&[("X", 1)], LinRel::Le, 3),
                row(&[("X", -1)], LinRel::Le, -3),
            ],
            ELIM_CAP
        )
        .unwrap());
    }

    #[test]
    fn solve_produces_a_model_between_bounds() {
        let rows = vec![
            row(&[("X", 1), ("Y", -1)], LinRel::Lt, 0), // x < y
            row(&[("Y", 1)], LinRel::Le, 10),
            row(&[("X", -1)], LinRel::Lt, -9), // 9 < x
        ];
        let m = solve(rows.clone(), ELIM_CAP).unwrap().unwrap();
        assert!(rows.iter().all(|r| r.evaluate(&m) == Some(true)));
    }

    #[test]
    fn cap_is_enforced() {
        // 3 lowers x 3 uppers with a cap of 8 must blow up
        let mut rows = Vec::new();
        for i in 0..3 {
            rows.push(row(&[("X", -1), ("Y", i)], LinRel::Lt, -i));
            rows.push(row(&[("X", 1), ("Z", i + 1)], LinRel::Lt, i));
        }
        let err = eliminate(rows, &|v| *v == Var::named("X"), 8).unwrap_err();
        assert!(matches!(err, SolverError::EliminationBlowup { cap: 8, .. }));
    }
}
