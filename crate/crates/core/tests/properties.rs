//! Randomized law checks for the constraint domains and the engine.
//!
//! Every suite runs 512 generated cases. Domain suites check the
//! entailment preorder, conjunction laws, canonical rendering, and the
//! projection contract (restricted solutions satisfy the projection;
//! projected solutions extend back to full solutions), using per-domain
//! sampling oracles: pinned interior points for linear stores, ground
//! term enumeration for equation stores, and integer grids for gap
//! stores. Engine suites check answer-table invariants, agreement
//! between execution strategies, and bitwise determinism on small
//! generated programs.

use num::{BigInt, BigRational};
use proptest::prelude::*;

use tclp_core::lang::{parse_program, parse_query, ConstraintAtom, DomainTag, Term, Var};
use tclp_core::linq::LinStore;
use tclp_core::{
    apply_projection, covers, solve, standard_corpus, AnswerPolicy, EngineConfig, ProjectionMode,
    RunStatus, Store, Strategy as EngineStrategy, Valuation, Value, VarSet,
};

const CASES: u32 = 512;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        ..ProptestConfig::default()
    }
}

const VARS: [&str; 3] = ["X", "Y", "Z"];

// ---------------------------------------------------------------------------
// Store construction from generated atom text
// ---------------------------------------------------------------------------

/// Parses one constraint atom by wrapping it in a throwaway query.
fn parse_atom(text: &str) -> Option<ConstraintAtom> {
    let q = parse_query(&format!("?- {{{text}}}, q(X).")).ok()?;
    q.constraints.into_iter().next()
}

/// Conjoins parsed atoms onto an existing store, left to right.
fn extend(base: &Store, atoms: &[String]) -> Option<Store> {
    let mut cur = base.clone();
    for a in atoms {
        cur = cur.conjoin_atom(&parse_atom(a)?).ok()?;
    }
    Some(cur)
}

fn store_from(tag: DomainTag, atoms: &[String]) -> Option<Store> {
    extend(&Store::top(tag), atoms)
}

fn restrict(val: &Valuation, keep: &VarSet) -> Valuation {
    val.iter()
        .filter(|(v, _)| keep.contains(*v))
        .map(|(v, x)| (v.clone(), x.clone()))
        .collect()
}

/// Deterministic subset of a variable set selected by mask bits.
fn mask_subset(vars: &VarSet, mask: u8) -> VarSet {
    vars.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << (i % 8)) != 0)
        .map(|(_, v)| v.clone())
        .collect()
}

/// Deterministic Fisher-Yates shuffle driven by a caller-supplied seed.
fn shuffle<T: Clone>(items: &[T], mut seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    for i in (1..out.len()).rev() {
        seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let j = (seed >> 33) as usize % (i + 1);
        out.swap(i, j);
    }
    out
}

// ---------------------------------------------------------------------------
// Atom generators
// ---------------------------------------------------------------------------

fn lin_operand() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..3).prop_map(|i| VARS[i].to_string()),
        (0i64..=24).prop_map(|k| k.to_string()),
        ((0usize..3), 1i64..=12, any::<bool>()).prop_map(|(i, k, plus)| {
            if plus {
                format!("{} + {}", VARS[i], k)
            } else {
                format!("{} - {}", VARS[i], k)
            }
        }),
        ((0usize..3), (0usize..3)).prop_map(|(i, j)| format!("{} + {}", VARS[i], VARS[j])),
    ]
}

fn lin_atom() -> impl Strategy<Value = String> {
    (
        lin_operand(),
        prop::sample::select(vec!["<", "=<", "=", ">=", ">"]),
        lin_operand(),
    )
        .prop_map(|(l, op, r)| format!("{l} {op} {r}"))
}

fn lin_atoms(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(lin_atom(), 0..=max)
}

fn h_term(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        prop::sample::select(vec!["a".to_string(), "b".to_string()]),
        (0usize..3).prop_map(|i| VARS[i].to_string()),
    ];
    leaf.prop_recursive(depth, 8, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| format!("f({t})")),
            (inner.clone(), inner).prop_map(|(t, u)| format!("g({t}, {u})")),
        ]
    })
    .boxed()
}

fn h_atom() -> impl Strategy<Value = String> {
    ((0usize..3), h_term(2)).prop_map(|(i, t)| format!("{} = {}", VARS[i], t))
}

fn h_atoms(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(h_atom(), 0..=max)
}

/// Gap atoms over the first `nvars` variables. Constants stay small so
/// that every consistent conjunction (and every counterexample to a
/// failed entailment) has an integer solution within the test grid.
fn gap_atom(nvars: usize) -> impl Strategy<Value = String> {
    let op = prop::sample::select(vec!["<", "=<", ">", ">="]);
    prop_oneof![
        ((0..nvars), op.clone(), (0..nvars), 0i64..=3).prop_map(|(i, op, j, k)| {
            if k == 0 {
                format!("{} {op} {}", VARS[i], VARS[j])
            } else {
                format!("{} {op} {} + {}", VARS[i], VARS[j], k)
            }
        }),
        ((0..nvars), op, 0i64..=6).prop_map(|(i, op, k)| format!("{} {op} {}", VARS[i], k)),
        ((0..nvars), 0i64..=6).prop_map(|(i, k)| format!("{} = {}", VARS[i], k)),
    ]
}

fn gap_atoms(nvars: usize, max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(gap_atom(nvars), 0..=max)
}

/// A store from any of the three domains.
fn any_store() -> impl Strategy<Value = Store> {
    prop_oneof![
        lin_atoms(3).prop_filter_map("parses", |a| store_from(DomainTag::Linq, &a)),
        h_atoms(3).prop_filter_map("parses", |a| store_from(DomainTag::Herbrand, &a)),
        gap_atoms(3, 3).prop_filter_map("parses", |a| store_from(DomainTag::GapOrder, &a)),
    ]
}

// ---------------------------------------------------------------------------
// Sampling oracles
// ---------------------------------------------------------------------------

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// A rational strictly inside the variable's feasible interval, read off
/// a store already projected onto that single variable.
fn pick_inside(ls: &LinStore, v: &Var, seed: i64) -> BigRational {
    let (point, lo, hi) = ls.interval_of(v);
    if let Some(p) = point {
        return p;
    }
    let frac = BigRational::new(BigInt::from(seed), BigInt::from(8));
    match (lo, hi) {
        (Some((l, _)), Some((h, _))) => {
            if l == h {
                l
            } else {
                l.clone() + (h - l) * frac
            }
        }
        (Some((l, _)), None) => l + rat(seed),
        (None, Some((h, _))) => h - rat(seed),
        (None, None) => rat(seed - 4),
    }
}

/// A full solution of a consistent linear store, found by pinning
/// variables one at a time to interior points of their projected
/// intervals. Every pin must leave the store consistent: one-variable
/// projections may only claim values that extend to full solutions.
fn lin_sample(store: &Store, seeds: &[i64]) -> Valuation {
    let mut cur = store.clone();
    let mut val = Valuation::new();
    let vars: Vec<Var> = store.vars().into_iter().collect();
    for (i, v) in vars.iter().enumerate() {
        let single: VarSet = std::iter::once(v.clone()).collect();
        let proj = cur.project(&single).expect("single-variable projection");
        let q = match &proj {
            Store::Lin(ls) => pick_inside(ls, v, seeds[i % seeds.len()]),
            _ => unreachable!("projection of a linear store is linear"),
        };
        cur = cur
            .conjoin_atom(&ConstraintAtom::eq(Term::Var(v.clone()), Term::Rat(q.clone())))
            .expect("pinning a variable");
        assert!(
            cur.is_consistent(),
            "a value inside the projected interval of {v:?} is not extendable"
        );
        val.insert(v.clone(), Value::Rat(q));
    }
    val
}

/// Ground terms over the signature {a, b, f/1, g/2} up to the given
/// nesting depth: 8 terms at depth 1, 80 at depth 2.
fn h_pool(depth: usize) -> Vec<Term> {
    let mut cur = vec![Term::sym("a"), Term::sym("b")];
    for _ in 0..depth {
        let mut next = cur.clone();
        for t in &cur {
            next.push(Term::app("f", vec![t.clone()]));
        }
        for t in &cur {
            for u in &cur {
                next.push(Term::app("g", vec![t.clone(), u.clone()]));
            }
        }
        cur = next;
    }
    cur
}

/// Replaces every variable in a term by a fixed ground symbol.
fn ground_fill(t: &Term, fill: &str) -> Term {
    match t {
        Term::Var(_) => Term::sym(fill),
        Term::App(app) if !app.is_ground() => Term::app(
            app.functor.as_ref(),
            app.args.iter().map(|a| ground_fill(a, fill)).collect(),
        ),
        other => other.clone(),
    }
}

/// A canonical ground solution of a consistent equation store: each
/// variable takes its resolved binding with remaining free variables
/// filled by one fixed symbol.
fn h_witness_over(store: &Store, vars: &[Var], fill: &str) -> Valuation {
    vars.iter()
        .map(|v| {
            let t = store.instantiate(&Term::Var(v.clone()));
            (v.clone(), Value::Tree(ground_fill(&t, fill)))
        })
        .collect()
}

/// Valuations over `vars` drawn from `values`, walking the full cross
/// product with a stride that caps the number of samples.
fn grid_valuations(vars: &[Var], values: &[Value], cap: usize) -> Vec<Valuation> {
    if vars.is_empty() {
        return vec![Valuation::new()];
    }
    let total: usize = values.len().pow(vars.len() as u32);
    let stride = total.div_ceil(cap).max(1);
    let mut out = Vec::new();
    let mut idx = 0usize;
    while idx < total {
        let mut val = Valuation::new();
        let mut rest = idx;
        for v in vars {
            val.insert(v.clone(), values[rest % values.len()].clone());
            rest /= values.len();
        }
        out.push(val);
        idx += stride;
    }
    out
}

fn int_values(lo: i64, hi: i64) -> Vec<Value> {
    (lo..=hi).map(Value::Int).collect()
}

fn union_vars(a: &Store, b: &Store) -> Vec<Var> {
    let mut set = a.vars();
    set.extend(b.vars());
    set.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Preorder and conjunction laws
// ---------------------------------------------------------------------------

fn check_preorder_laws(
    tag: DomainTag,
    atoms: &[String],
    ext1: &[String],
    ext2: &[String],
) -> Result<(), TestCaseError> {
    let base = match store_from(tag, atoms) {
        Some(s) => s,
        None => return Ok(()),
    };
    // reflexivity
    prop_assert!(base.entails(&base));

    // conjoining only strengthens, and entailment chains compose
    let b = match extend(&base, ext1) {
        Some(s) => s,
        None => return Ok(()),
    };
    prop_assert!(b.entails(&base));
    let c = match extend(&b, ext2) {
        Some(s) => s,
        None => return Ok(()),
    };
    prop_assert!(c.entails(&b));
    prop_assert!(c.entails(&base));

    // store-level conjunction commutes, strengthens both arguments, and
    // agrees with atom-by-atom conjunction
    let ext_store = match store_from(tag, ext1) {
        Some(s) => s,
        None => return Ok(()),
    };
    let joined = base.conjoin(&ext_store).expect("conjoin");
    let flipped = ext_store.conjoin(&base).expect("conjoin");
    prop_assert!(joined.mutually_entails(&flipped));
    prop_assert_eq!(joined.render(), flipped.render());
    prop_assert!(joined.entails(&base));
    prop_assert!(joined.entails(&ext_store));
    prop_assert!(joined.mutually_entails(&b));
    Ok(())
}

fn check_canonical_order_independence(
    tag: DomainTag,
    atoms: &[String],
    seed: u64,
) -> Result<(), TestCaseError> {
    let s1 = match store_from(tag, atoms) {
        Some(s) => s,
        None => return Ok(()),
    };
    let shuffled = shuffle(atoms, seed);
    let s2 = store_from(tag, &shuffled).expect("same atoms in another order");
    prop_assert!(s1.mutually_entails(&s2));
    prop_assert_eq!(s1.render(), s2.render());
    Ok(())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn lin_entailment_is_a_preorder_and_conjunction_strengthens(
        atoms in lin_atoms(3), ext1 in lin_atoms(2), ext2 in lin_atoms(2),
    ) {
        check_preorder_laws(DomainTag::Linq, &atoms, &ext1, &ext2)?;
    }

    #[test]
    fn herbrand_entailment_is_a_preorder_and_conjunction_strengthens(
        atoms in h_atoms(3), ext1 in h_atoms(2), ext2 in h_atoms(2),
    ) {
        check_preorder_laws(DomainTag::Herbrand, &atoms, &ext1, &ext2)?;
    }

    #[test]
    fn gap_entailment_is_a_preorder_and_conjunction_strengthens(
        atoms in gap_atoms(3, 3), ext1 in gap_atoms(3, 2), ext2 in gap_atoms(3, 2),
    ) {
        check_preorder_laws(DomainTag::GapOrder, &atoms, &ext1, &ext2)?;
    }

    #[test]
    fn lin_canonical_form_ignores_atom_order(atoms in lin_atoms(4), seed in any::<u64>()) {
        check_canonical_order_independence(DomainTag::Linq, &atoms, seed)?;
    }

    #[test]
    fn herbrand_canonical_form_ignores_atom_order(atoms in h_atoms(4), seed in any::<u64>()) {
        check_canonical_order_independence(DomainTag::Herbrand, &atoms, seed)?;
    }

    #[test]
    fn gap_canonical_form_ignores_atom_order(atoms in gap_atoms(3, 4), seed in any::<u64>()) {
        check_canonical_order_independence(DomainTag::GapOrder, &atoms, seed)?;
    }
}

// ---------------------------------------------------------------------------
// Projection: restricted solutions satisfy the projection, projected
// solutions extend back, and staging projections composes.
// ---------------------------------------------------------------------------

fn check_staged_projection(
    c: &Store,
    keep: &VarSet,
    keep2: &VarSet,
) -> Result<(), TestCaseError> {
    let staged = c
        .project(keep)
        .expect("project")
        .project(keep2)
        .expect("project");
    let both: VarSet = keep.intersection(keep2).cloned().collect();
    let direct = c.project(&both).expect("project");
    prop_assert!(staged.mutually_entails(&direct));
    prop_assert_eq!(staged.render(), direct.render());
    Ok(())
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn lin_projection_preserves_and_reflects_solutions(
        atoms in lin_atoms(3),
        keep_mask in 0u8..8,
        keep_mask2 in 0u8..8,
        seeds in prop::collection::vec(1i64..=7, 4),
    ) {
        let c = match store_from(DomainTag::Linq, &atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(c.is_consistent());
        let keep = mask_subset(&c.vars(), keep_mask);
        let proj = c.project(&keep).expect("project");
        prop_assert!(proj.is_consistent());

        for rot in 0..2 {
            let rotated: Vec<i64> = seeds.iter().cycle().skip(rot).take(4).copied().collect();

            // solutions of c keep satisfying the projection after restriction
            let val = lin_sample(&c, &rotated);
            prop_assert_eq!(c.satisfies(&val), Some(true));
            prop_assert_eq!(proj.satisfies(&restrict(&val, &keep)), Some(true));

            // solutions of the projection extend to full solutions of c
            let pval = lin_sample(&proj, &rotated);
            prop_assert_eq!(proj.satisfies(&pval), Some(true));
            let mut ext = c.clone();
            for (v, x) in &pval {
                if let Value::Rat(q) = x {
                    ext = ext
                        .conjoin_atom(&ConstraintAtom::eq(Term::Var(v.clone()), Term::Rat(q.clone())))
                        .expect("pinning a projected solution");
                }
            }
            prop_assert!(ext.is_consistent());
        }

        let keep2 = mask_subset(&c.vars(), keep_mask2);
        check_staged_projection(&c, &keep, &keep2)?;
    }

    #[test]
    fn herbrand_projection_preserves_and_reflects_solutions(
        atoms in prop::collection::vec(h_atom(), 1..=3),
        keep_mask in 0u8..8,
        keep_mask2 in 0u8..8,
    ) {
        let c = match store_from(DomainTag::Herbrand, &atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(c.is_consistent());
        let vars: Vec<Var> = c.vars().into_iter().collect();
        let keep = mask_subset(&c.vars(), keep_mask);
        let proj = c.project(&keep).expect("project");
        prop_assert!(proj.is_consistent());

        // solutions of c: canonical witnesses plus a ground enumeration
        let pool: Vec<Value> = h_pool(if vars.len() <= 2 { 2 } else { 1 })
            .into_iter()
            .map(Value::Tree)
            .collect();
        let mut sols = vec![
            h_witness_over(&c, &vars, "a"),
            h_witness_over(&c, &vars, "b"),
        ];
        for val in grid_valuations(&vars, &pool, 700) {
            if c.satisfies(&val) == Some(true) {
                sols.push(val);
            }
        }
        for val in &sols {
            prop_assert_eq!(c.satisfies(val), Some(true));
            prop_assert_eq!(proj.satisfies(&restrict(val, &keep)), Some(true));
        }

        // solutions of the projection extend back into c
        let kept: Vec<Var> = proj.vars().into_iter().collect();
        let mut psols = vec![
            h_witness_over(&proj, &kept, "a"),
            h_witness_over(&proj, &kept, "b"),
        ];
        for val in grid_valuations(&kept, &pool, 400) {
            if proj.satisfies(&val) == Some(true) {
                psols.push(val);
            }
        }
        for val in &psols {
            prop_assert_eq!(proj.satisfies(val), Some(true));
            let mut ext = c.clone();
            for (v, x) in val {
                if let Value::Tree(t) = x {
                    ext = ext.conjoin_eq(&Term::Var(v.clone()), t).expect("pinning");
                }
            }
            prop_assert!(ext.is_consistent());
        }

        let keep2 = mask_subset(&c.vars(), keep_mask2);
        check_staged_projection(&c, &keep, &keep2)?;
    }

    #[test]
    fn gap_projection_preserves_and_reflects_solutions(
        atoms in gap_atoms(3, 4),
        keep_mask in 0u8..8,
        keep_mask2 in 0u8..8,
    ) {
        let c = match store_from(DomainTag::GapOrder, &atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(c.is_consistent());
        let vars: Vec<Var> = c.vars().into_iter().collect();
        let keep = mask_subset(&c.vars(), keep_mask);
        let proj = c.project(&keep).expect("project");
        prop_assert!(proj.is_consistent());

        let ints = int_values(-20, 20);
        let mut sols = Vec::new();
        if let Store::Gap(g) = &c {
            let model = g.model().expect("consistent gap store has a model");
            sols.push(model.into_iter().map(|(v, n)| (v, Value::Int(n))).collect());
        }
        for val in grid_valuations(&vars, &ints, 1200) {
            if c.satisfies(&val) == Some(true) {
                sols.push(val);
            }
        }
        for val in &sols {
            prop_assert_eq!(c.satisfies(val), Some(true));
            prop_assert_eq!(proj.satisfies(&restrict(val, &keep)), Some(true));
        }

        let kept: Vec<Var> = proj.vars().into_iter().collect();
        let mut psols = Vec::new();
        if let Store::Gap(g) = &proj {
            let model = g.model().expect("consistent gap store has a model");
            psols.push(model.into_iter().map(|(v, n)| (v, Value::Int(n))).collect::<Valuation>());
        }
        for val in grid_valuations(&kept, &ints, 600) {
            if proj.satisfies(&val) == Some(true) {
                psols.push(val);
            }
        }
        for val in &psols {
            let mut ext = c.clone();
            for (v, x) in val {
                if let Value::Int(n) = x {
                    ext = ext
                        .conjoin_atom(&ConstraintAtom::eq(Term::Var(v.clone()), Term::int(*n)))
                        .expect("pinning");
                }
            }
            prop_assert!(ext.is_consistent());
        }

        let keep2 = mask_subset(&c.vars(), keep_mask2);
        check_staged_projection(&c, &keep, &keep2)?;
    }

    /// Eliminating variables one at a time gives the same result in any
    /// order, and matches projecting in a single step.
    #[test]
    fn lin_elimination_order_does_not_matter(
        atoms in lin_atoms(4),
        keep_mask in 0u8..8,
        seed in any::<u64>(),
    ) {
        let c = match store_from(DomainTag::Linq, &atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(c.is_consistent());
        let keep = mask_subset(&c.vars(), keep_mask);
        let dropped: Vec<Var> = c.vars().into_iter().filter(|v| !keep.contains(v)).collect();
        let eliminate = |order: &[Var]| -> Store {
            let mut cur = c.clone();
            for v in order {
                let rest: VarSet = cur.vars().into_iter().filter(|u| u != v).collect();
                cur = cur.project(&rest).expect("project");
            }
            cur
        };
        let s1 = eliminate(&dropped);
        let s2 = eliminate(&shuffle(&dropped, seed));
        let direct = c.project(&keep).expect("project");
        prop_assert!(s1.mutually_entails(&s2));
        prop_assert!(s1.mutually_entails(&direct));
        prop_assert_eq!(s1.render(), s2.render());
        prop_assert_eq!(s1.render(), direct.render());
    }
}

// ---------------------------------------------------------------------------
// Brute-force agreement
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(config())]

    /// Claimed entailments hold on every enumerated ground instance.
    #[test]
    fn herbrand_entailment_is_sound_on_ground_instances(
        a_atoms in prop::collection::vec(h_atom(), 1..=3),
        b_atoms in prop::collection::vec(h_atom(), 1..=3),
    ) {
        let a = match store_from(DomainTag::Herbrand, &a_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        let b = match store_from(DomainTag::Herbrand, &b_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(a.is_consistent());
        let vars = union_vars(&a, &b);
        let pool: Vec<Value> = h_pool(if vars.len() <= 2 { 2 } else { 1 })
            .into_iter()
            .map(Value::Tree)
            .collect();

        let mut sols = vec![
            h_witness_over(&a, &vars, "a"),
            h_witness_over(&a, &vars, "b"),
        ];
        for val in grid_valuations(&vars, &pool, 700) {
            if a.satisfies(&val) == Some(true) {
                sols.push(val);
            }
        }
        let ent = a.entails(&b);
        for val in &sols {
            prop_assert_eq!(a.satisfies(val), Some(true));
            if ent {
                prop_assert_eq!(
                    b.satisfies(val),
                    Some(true),
                    "claimed entailment fails on a ground instance"
                );
            }
        }
    }

    /// On two variables the integer grid decides consistency and
    /// entailment exactly, so the solver must agree with it both ways.
    #[test]
    fn gap_agrees_with_integer_brute_force(
        a_atoms in gap_atoms(2, 3),
        b_atoms in gap_atoms(2, 3),
    ) {
        let a = match store_from(DomainTag::GapOrder, &a_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        let b = match store_from(DomainTag::GapOrder, &b_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        let vars = union_vars(&a, &b);
        let ints = int_values(-21, 21);
        let grid = grid_valuations(&vars, &ints, usize::MAX);

        let sols_a: Vec<&Valuation> = grid
            .iter()
            .filter(|val| a.satisfies(val) == Some(true))
            .collect();
        prop_assert_eq!(
            a.is_consistent(),
            !sols_a.is_empty(),
            "consistency disagrees with the grid"
        );
        let brute = sols_a.iter().all(|val| b.satisfies(val) == Some(true));
        prop_assert_eq!(a.entails(&b), brute, "entailment disagrees with the grid");
    }

    /// On three variables the sampled grid still refutes unsound
    /// entailment claims.
    #[test]
    fn gap_entailment_is_sound_on_sampled_grids(
        a_atoms in gap_atoms(3, 4),
        b_atoms in gap_atoms(3, 4),
    ) {
        let a = match store_from(DomainTag::GapOrder, &a_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        let b = match store_from(DomainTag::GapOrder, &b_atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        prop_assume!(a.is_consistent());
        if !a.entails(&b) {
            return Ok(());
        }
        let vars = union_vars(&a, &b);
        let ints = int_values(-21, 21);
        if let Store::Gap(g) = &a {
            let model: Valuation = g
                .model()
                .expect("consistent gap store has a model")
                .into_iter()
                .map(|(v, n)| (v, Value::Int(n)))
                .collect();
            // the canonical model only covers the store's own variables;
            // extend it to the union with zeros so both stores can judge it
            let mut full = model;
            for v in &vars {
                full.entry(v.clone()).or_insert(Value::Int(0));
            }
            if a.satisfies(&full) == Some(true) {
                prop_assert_eq!(b.satisfies(&full), Some(true));
            }
        }
        for val in grid_valuations(&vars, &ints, 4000) {
            if a.satisfies(&val) == Some(true) {
                prop_assert_eq!(
                    b.satisfies(&val),
                    Some(true),
                    "claimed entailment fails on a grid point"
                );
            }
        }
    }

    /// Re-conjoining a store with itself changes nothing observable:
    /// the closure the store maintains is idempotent.
    #[test]
    fn gap_conjunction_is_idempotent(atoms in gap_atoms(3, 4)) {
        let c = match store_from(DomainTag::GapOrder, &atoms) {
            Some(s) => s,
            None => return Ok(()),
        };
        let cc = c.conjoin(&c).expect("conjoin");
        prop_assert!(cc.mutually_entails(&c));
        prop_assert_eq!(cc.render(), c.render());
        let all_vars = c.vars();
        let onto_all = c.project(&all_vars).expect("project");
        prop_assert!(onto_all.mutually_entails(&c));
    }

    /// Any finite pool of lower bounds on the same difference collapses
    /// to its single strongest member.
    #[test]
    fn gap_bound_pools_collapse_to_their_strongest_member(
        bound in 1i64..=10,
        mask in 1u32..2048,
    ) {
        let ks: Vec<i64> = (0..=bound).filter(|k| mask & (1u32 << k) != 0).collect();
        prop_assume!(!ks.is_empty());
        let atoms: Vec<String> = ks.iter().map(|k| format!("X > Y + {k}")).collect();
        let pool = store_from(DomainTag::GapOrder, &atoms).expect("pool");
        let kmax = *ks.iter().max().unwrap();
        let strongest =
            store_from(DomainTag::GapOrder, &[format!("X > Y + {kmax}")]).expect("strongest");
        prop_assert!(pool.mutually_entails(&strongest));
        prop_assert_eq!(pool.render(), strongest.render());
        for k in &ks {
            if *k < kmax {
                let weaker =
                    store_from(DomainTag::GapOrder, &[format!("X > Y + {k}")]).expect("weaker");
                prop_assert!(strongest.entails(&weaker));
                prop_assert!(!weaker.entails(&strongest));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Projection approximation modes
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(config())]

    /// The under-approximation entails the exact projection, which in
    /// turn entails both over-approximations.
    #[test]
    fn projection_modes_order_by_strength(s in any_store(), keep_mask in 0u8..8) {
        prop_assume!(s.is_consistent());
        let keep = mask_subset(&s.vars(), keep_mask);
        let precise = s.project(&keep).expect("project");
        let over_true = apply_projection(ProjectionMode::OverTrue, &s, &keep).expect("over-true");
        let over_drop = apply_projection(ProjectionMode::OverDrop, &s, &keep).expect("over-drop");
        let under = apply_projection(ProjectionMode::UnderSample, &s, &keep).expect("under");
        prop_assert!(precise.entails(&over_true.store));
        prop_assert!(precise.entails(&over_drop.store));
        prop_assert!(under.store.entails(&precise));
        prop_assert!(under.store.is_consistent());
    }
}

// ---------------------------------------------------------------------------
// Engine invariants on generated programs
// ---------------------------------------------------------------------------

/// Right-recursive distance program over a two-edge acyclic graph.
fn acyclic_dist_text(early: bool, w1: i64, w2: i64) -> String {
    let rec = if early {
        "dist(X, Y, D) :- {D1 > 0, D2 > 0, D = D1 + D2}, edge(X, Z, D1), dist(Z, Y, D2)."
    } else {
        "dist(X, Y, D) :- edge(X, Z, D1), dist(Z, Y, D2), {D = D1 + D2}."
    };
    format!(
        ":- solver(linq).\n:- table dist/3.\n{rec}\ndist(X, Y, D) :- edge(X, Y, D).\n\
         edge(a, b, {w1}).\nedge(b, c, {w2}).\n"
    )
}

/// Distance program whose edges carry weight windows; the `b -> a` edge
/// makes the graph cyclic.
fn window_dist_text(cyclic: bool, w: [(i64, i64); 2]) -> String {
    let back = if cyclic {
        format!("edge(b, a, W) :- {{W > {}, W < {}}}.\n", w[1].0, w[1].1)
    } else {
        format!("edge(b, c, W) :- {{W > {}, W < {}}}.\n", w[1].0, w[1].1)
    };
    format!(
        ":- solver(linq).\n:- table dist/3.\n\
         dist(X, Y, D) :- {{D1 > 0, D2 > 0, D = D1 + D2}}, edge(X, Z, D1), dist(Z, Y, D2).\n\
         dist(X, Y, D) :- edge(X, Y, D).\n\
         edge(a, b, W) :- {{W > {}, W < {}}}.\n{back}",
        w[0].0, w[0].1
    )
}

/// Distance program with two overlapping weight windows on the same
/// edge, so later answers can entail earlier ones.
fn double_window_text(w: [(i64, i64); 3]) -> String {
    format!(
        ":- solver(linq).\n:- table dist/3.\n\
         dist(X, Y, D) :- {{D1 > 0, D2 > 0, D = D1 + D2}}, edge(X, Z, D1), dist(Z, Y, D2).\n\
         dist(X, Y, D) :- edge(X, Y, D).\n\
         edge(a, b, W) :- {{W > {}, W < {}}}.\n\
         edge(a, b, W) :- {{W > {}, W < {}}}.\n\
         edge(b, c, W) :- {{W > {}, W < {}}}.\n",
        w[0].0, w[0].1, w[1].0, w[1].1, w[2].0, w[2].1
    )
}

const COUNTER_TEXT: &str = ":- solver(linq).\n:- table nat/1.\n\
    nat(X) :- {X = 0}.\nnat(X) :- {X = Y + 1, Y >= 0}, nat(Y).\n";

fn run(program_text: &str, query_text: &str, cfg: &EngineConfig) -> tclp_core::SolveResult {
    let program = parse_program(program_text).expect("program parses");
    let query = parse_query(query_text).expect("query parses");
    solve(&program, &query, cfg).expect("solve runs")
}

fn mutually_covering(a: &[Store], b: &[Store]) -> bool {
    covers(a, b) && covers(b, a)
}

proptest! {
    #![proptest_config(config())]

    /// Under the discard-and-remove policy every answer table is an
    /// antichain, and every removed answer is covered by a kept one.
    #[test]
    fn discard_and_remove_keeps_answer_tables_antichains(
        use_counter in any::<bool>(),
        lo in 10i64..=40,
        width in 3i64..=30,
        q in 40i64..=140,
        k in 3i64..=12,
    ) {
        let (text, query) = if use_counter {
            (COUNTER_TEXT.to_string(), format!("?- {{X < {k}}}, nat(X)."))
        } else {
            (
                window_dist_text(true, [(lo, lo + width), (lo / 2, lo / 2 + width)]),
                format!("?- {{D < {q}}}, dist(a, Y, D)."),
            )
        };
        let cfg = EngineConfig {
            strategy: EngineStrategy::Tclp,
            answer_policy: AnswerPolicy::DiscardAndRemove,
            budget: 3000,
            ..EngineConfig::default()
        };
        let result = run(&text, &query, &cfg);
        for tree in &result.forest.trees {
            let gen = match &tree.generator {
                Some(g) => g,
                None => continue,
            };
            let kept: Vec<Store> = gen
                .answers
                .iter()
                .filter(|a| a.kept)
                .map(|a| a.store.clone())
                .collect();
            for (i, a) in kept.iter().enumerate() {
                for (j, b) in kept.iter().enumerate() {
                    if i != j {
                        prop_assert!(
                            !a.entails(b),
                            "kept answers must form an antichain: {} entails {}",
                            a.render(),
                            b.render()
                        );
                    }
                }
            }
            let removed: Vec<Store> = gen
                .answers
                .iter()
                .filter(|a| !a.kept)
                .map(|a| a.store.clone())
                .collect();
            if !removed.is_empty() {
                prop_assert!(
                    covers(&removed, &kept),
                    "every removed answer must be covered by a kept one"
                );
            }
        }
    }

    /// All four strategies find the same answers (up to mutual coverage)
    /// on terminating acyclic queries.
    #[test]
    fn strategies_agree_on_terminating_queries(
        early in any::<bool>(),
        w1 in 1i64..=60,
        w2 in 1i64..=60,
        q in 2i64..=150,
    ) {
        let text = acyclic_dist_text(early, w1, w2);
        let query = format!("?- {{D < {q}}}, dist(a, Y, D).");
        let mut answer_sets = Vec::new();
        for strategy in [EngineStrategy::Lp, EngineStrategy::Clp, EngineStrategy::TabVariant, EngineStrategy::Tclp] {
            let cfg = EngineConfig { strategy, budget: 4000, ..EngineConfig::default() };
            let result = run(&text, &query, &cfg);
            prop_assert_eq!(result.status, RunStatus::Complete, "{} must terminate", strategy.name());
            answer_sets.push(result.answers);
        }
        for i in 0..answer_sets.len() {
            for j in (i + 1)..answer_sets.len() {
                prop_assert!(
                    mutually_covering(&answer_sets[i], &answer_sets[j]),
                    "strategies disagree on a terminating query"
                );
            }
        }
    }

    /// Stricter discard policies keep fewer answers, and all policies
    /// agree on what the answers mean.
    #[test]
    fn answer_policies_only_trim_redundant_answers(
        l1 in 10i64..=30,
        d1 in 4i64..=24,
        nested in any::<bool>(),
        l3 in 5i64..=25,
        d3 in 4i64..=20,
        q in 30i64..=120,
    ) {
        // second window either nested inside the first or shifted past it
        let (l2, h2) = if nested {
            (l1 + 1, l1 + d1 - 1)
        } else {
            (l1 + d1, l1 + 2 * d1)
        };
        prop_assume!(l2 < h2);
        let text = double_window_text([(l1, l1 + d1), (l2, h2), (l3, l3 + d3)]);
        let query = format!("?- {{D < {q}}}, dist(a, Y, D).");
        let mut results = Vec::new();
        for policy in [
            AnswerPolicy::KeepAll,
            AnswerPolicy::DiscardNewEntailed,
            AnswerPolicy::DiscardAndRemove,
        ] {
            let cfg = EngineConfig {
                strategy: EngineStrategy::Tclp,
                answer_policy: policy,
                budget: 20_000,
                ..EngineConfig::default()
            };
            let result = run(&text, &query, &cfg);
            prop_assert_eq!(result.status, RunStatus::Complete);
            results.push(result);
        }
        let keep_all = &results[0];
        let discard_new = &results[1];
        let discard_remove = &results[2];
        prop_assert!(keep_all.answers.len() >= discard_new.answers.len());
        prop_assert!(discard_new.answers.len() >= discard_remove.answers.len());
        prop_assert!(mutually_covering(&keep_all.answers, &discard_new.answers));
        prop_assert!(mutually_covering(&keep_all.answers, &discard_remove.answers));
    }

    /// Two identical runs produce byte-identical forests, answers, and
    /// counters.
    #[test]
    fn solving_is_deterministic(
        cyclic in any::<bool>(),
        lo in 10i64..=40,
        width in 3i64..=30,
        q in 40i64..=140,
        strategy in prop::sample::select(vec![
            EngineStrategy::Lp, EngineStrategy::Clp, EngineStrategy::TabVariant, EngineStrategy::Tclp,
        ]),
        policy in prop::sample::select(vec![
            AnswerPolicy::KeepAll,
            AnswerPolicy::DiscardNewEntailed,
            AnswerPolicy::DiscardAndRemove,
        ]),
        budget in 200u64..=2000,
    ) {
        let text = window_dist_text(cyclic, [(lo, lo + width), (lo / 2, lo / 2 + width)]);
        let query = format!("?- {{D < {q}}}, dist(a, Y, D).");
        let cfg = EngineConfig { strategy, answer_policy: policy, budget, ..EngineConfig::default() };
        let r1 = run(&text, &query, &cfg);
        let r2 = run(&text, &query, &cfg);
        prop_assert_eq!(r1.status, r2.status);
        prop_assert_eq!(&r1.stats, &r2.stats);
        prop_assert_eq!(r1.rendered_answers(), r2.rendered_answers());
        prop_assert_eq!(r1.forest.to_json(), r2.forest.to_json());
    }

    /// Every configuration runs the fixed corpus without panicking or
    /// reporting an error, whatever its termination status.
    #[test]
    fn all_configurations_run_the_corpus_cleanly(
        entry_idx in 0usize..3,
        strategy in prop::sample::select(vec![
            EngineStrategy::Lp, EngineStrategy::Clp, EngineStrategy::TabVariant, EngineStrategy::Tclp,
        ]),
        policy in prop::sample::select(vec![
            AnswerPolicy::KeepAll,
            AnswerPolicy::DiscardNewEntailed,
            AnswerPolicy::DiscardAndRemove,
        ]),
        call_projection in prop::sample::select(vec![
            ProjectionMode::Precise, ProjectionMode::OverTrue, ProjectionMode::UnderSample,
        ]),
        answer_projection in prop::sample::select(vec![
            ProjectionMode::Precise, ProjectionMode::OverDrop, ProjectionMode::UnderSample,
        ]),
        budget in 100u64..=1500,
    ) {
        let corpus = standard_corpus();
        let entry = &corpus[entry_idx % corpus.len()];
        let cfg = EngineConfig { strategy, answer_policy: policy, call_projection, answer_projection, budget };
        let result = solve(&entry.program, &entry.query, &cfg);
        prop_assert!(result.is_ok(), "{} failed: {:?}", entry.name, result.err());
        let result = result.unwrap();
        prop_assert_eq!(result.rendered_answers().len(), result.answers.len());
        for a in &result.answers {
            prop_assert!(a.is_consistent(), "answers must be consistent stores");
        }
    }
}
