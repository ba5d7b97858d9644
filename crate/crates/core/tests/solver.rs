//! The solver against brute-force enumeration over a small universe.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use setforge::eval::{eval_formula, Env};
use setforge::formula::{negate, Constraint, Formula, Kind, Sort, Term};
use setforge::lang::{parse_formula, print_formula};
use setforge::solver::{Proof, Scope, SolveResult, Solver};
use setforge::value::{Namespace, Value};

use common::{powerset, sample};

const SET_VARS: [&str; 2] = ["X", "Y"];

fn addrs() -> Vec<Value> {
    ["a1", "a2", "a3"].map(|n| Value::Atom(setforge::value::Atom::with_ns(n, Namespace::Addr))).to_vec()
}

fn sorts() -> BTreeMap<String, Sort> {
    let addr = Sort::Atoms(Namespace::Addr);
    BTreeMap::from([
        ("X".to_string(), Sort::set(addr.clone())),
        ("Y".to_string(), Sort::set(addr.clone())),
        ("Z".to_string(), addr),
        ("N".to_string(), Sort::Int),
    ])
}

/// Every assignment of the four declared variables in the default scope.
fn universe() -> Vec<Env> {
    let sets: Vec<Value> = powerset(&addrs()).into_iter().map(Value::set).collect();
    let mut out = Vec::new();
    for x in &sets {
        for y in &sets {
            for z in addrs() {
                for n in 0..=8 {
                    out.push(Env::from([
                        ("X".into(), x.clone()),
                        ("Y".into(), y.clone()),
                        ("Z".into(), z.clone()),
                        ("N".into(), Value::int(n)),
                    ]));
                }
            }
        }
    }
    out
}

fn set_term() -> impl Strategy<Value = Term> {
    let lit = proptest::collection::vec(proptest::sample::select(addrs()), 0..3).prop_map(|xs| Term::Lit(Value::set(xs)));
    prop_oneof![3 => proptest::sample::select(&SET_VARS[..]).prop_map(Term::var), 1 => lit]
}

fn elem_term() -> impl Strategy<Value = Term> {
    prop_oneof![Just(Term::var("Z")), proptest::sample::select(addrs()).prop_map(Term::Lit)]
}

fn int_term() -> impl Strategy<Value = Term> {
    prop_oneof![Just(Term::var("N")), (0i64..5).prop_map(Term::int)]
}

fn constraint() -> impl Strategy<Value = Constraint> {
    use Kind::*;
    let binary_sets = proptest::sample::select(vec![Eq, Neq, Disj, Ndisj, Subset, Nsubset]);
    let ternary_sets = proptest::sample::select(vec![Un, Diff, Inters]);
    prop_oneof![
        (binary_sets, set_term(), set_term()).prop_map(|(k, a, b)| Constraint::new(k, vec![a, b])),
        (ternary_sets, set_term(), set_term(), set_term()).prop_map(|(k, a, b, c)| Constraint::new(k, vec![a, b, c])),
        (proptest::sample::select(vec![In, Nin]), elem_term(), set_term()).prop_map(|(k, a, b)| Constraint::new(k, vec![a, b])),
        (set_term(), int_term()).prop_map(|(s, n)| Constraint::new(Size, vec![s, n])),
        (proptest::sample::select(vec![Le, Lt]), int_term(), int_term()).prop_map(|(k, a, b)| Constraint::new(k, vec![a, b])),
        (set_term(), elem_term(), set_term()).prop_map(|(s, z, t)| Constraint::eq(s, Term::set_ext(vec![z], Some(t)))),
    ]
}

fn small_formula() -> impl Strategy<Value = Formula> {
    proptest::collection::vec(proptest::collection::vec(constraint(), 1..4), 1..3).prop_map(|clauses| Formula { sorts: sorts(), clauses })
}

fn models<'a>(f: &Formula, u: &'a [Env]) -> Vec<&'a Env> {
    u.iter().filter(|env| eval_formula(f, env).expect("ground evaluation")).collect()
}

fn bind(env: &Env) -> Formula {
    Formula::conj(env.iter().map(|(k, v)| Constraint::eq(Term::var(k), Term::Lit(v.clone()))).collect())
}

#[test]
fn solve_agrees_with_enumeration() {
    let u = universe();
    let solver = Solver::new(Scope::default());
    for f in sample(small_formula(), 1000, 21) {
        let expected = !models(&f, &u).is_empty();
        match solver.solve(&f) {
            SolveResult::Sat(w) => {
                assert!(expected, "Sat but no model: {}", print_formula(&f));
                let env: Env = w.into_iter().filter(|(k, _)| sorts().contains_key(k)).collect();
                assert!(eval_formula(&f, &env).unwrap(), "bad witness {env:?} for {}", print_formula(&f));
            }
            SolveResult::Unsat => assert!(!expected, "Unsat but a model exists: {}", print_formula(&f)),
            SolveResult::Unknown(why) => panic!("Unknown ({why}) on a fully declared formula: {}", print_formula(&f)),
        }
    }
}

#[test]
fn negation_is_the_complement() {
    let u = universe();
    let solver = Solver::new(Scope::default());
    for f in sample(small_formula(), 60, 22) {
        let not_f = negate(&f).unwrap();
        for env in u.iter().step_by(7) {
            let holds = eval_formula(&f, env).unwrap();
            let neg = solver.solve(&bind(env).and(&not_f));
            assert_eq!(neg.is_sat(), !holds, "{} at {env:?}", print_formula(&f));
        }
    }
}

#[test]
fn implication_agrees_with_enumeration() {
    let u = universe();
    let solver = Solver::new(Scope::default());
    let pairs = sample((small_formula(), small_formula()), 200, 23);
    let mut verified = 0;
    for (hyp, concl) in pairs {
        let valid = models(&hyp, &u).iter().all(|env| eval_formula(&concl, env).unwrap());
        match solver.prove_implication(&hyp, &concl) {
            Proof::Verified => {
                verified += 1;
                assert!(valid, "{} => {}", print_formula(&hyp), print_formula(&concl))
            }
            Proof::Counterexample(w) => {
                assert!(!valid);
                let env: Env = w.into_iter().filter(|(k, _)| sorts().contains_key(k)).collect();
                assert!(eval_formula(&hyp, &env).unwrap() && !eval_formula(&concl, &env).unwrap());
            }
            Proof::Unknown(why) => panic!("undecided: {why}"),
        }
    }
    assert!(verified > 0, "no implication was valid; the sample is too weak");
}

#[test]
fn literal_atoms_join_the_search_domain() {
    // X and Y are undeclared: their domain comes from the literals around them.
    let f = parse_formula("un(X,Y,{a1,a2}) & X = {a1} & Y neq X").unwrap();
    let SolveResult::Sat(w) = Solver::new(Scope::default()).solve(&f) else { panic!() };
    assert_eq!(w["X"], Value::set([Value::atom("a1")]));
    assert!(eval_formula(&f, &w).unwrap());
}

#[test]
fn contradictions_are_refuted() {
    let solver = Solver::new(Scope::default());
    for src in [
        "dec(X,set(addr)) & a1 in X & a1 nin X",
        "dec(X,set(addr)) & dec(Y,set(addr)) & subset(X,Y) & a1 in X & disj(Y,{a1})",
        "dec(N,int) & lt(N,N)",
        "dec(X,set(addr)) & size(X,4)",
        "X = {a1/T} & X = {}",
    ] {
        let f = parse_formula(src).unwrap();
        assert_eq!(solver.solve(&f), SolveResult::Unsat, "{src}");
    }
}

#[test]
fn budget_exhaustion_is_unknown() {
    let f = parse_formula(
        "dec(A,set(int)) & dec(B,set(int)) & dec(C,set(int)) & dec(D,set(int)) & disj(A,B) & disj(C,D) & ndisj(A,D) & ndisj(B,C) & A neq C",
    )
    .unwrap();
    let r = Solver::new(Scope::default()).with_budget(10).solve(&f);
    assert!(matches!(r, SolveResult::Unknown(_)), "{r:?}");
}

// Relations over a reduced scope: two addresses and the integers 0 and 1.

fn tiny_scope() -> Scope {
    Scope {
        atoms_per_namespace: 2,
        int_range: (0, 1),
        max_set_card: 3,
        max_seq_len: 2,
    }
}

fn rel_sorts() -> BTreeMap<String, Sort> {
    let addr = Sort::Atoms(Namespace::Addr);
    let rel = Sort::rel(addr.clone(), Sort::Int);
    BTreeMap::from([
        ("R".to_string(), rel.clone()),
        ("G".to_string(), rel),
        ("D".to_string(), Sort::set(addr.clone())),
        ("K".to_string(), addr),
        ("V".to_string(), Sort::Int),
    ])
}

fn rel_universe() -> Vec<Env> {
    let keys = &addrs()[..2];
    let rels = common::relations(keys, &[Value::int(0), Value::int(1)], 3);
    let doms: Vec<Value> = powerset(keys).into_iter().map(Value::set).collect();
    let mut out = Vec::new();
    for r in &rels {
        for g in &rels {
            for d in &doms {
                for k in keys {
                    for v in 0..=1 {
                        out.push(Env::from([
                            ("R".into(), r.clone()),
                            ("G".into(), g.clone()),
                            ("D".into(), d.clone()),
                            ("K".into(), k.clone()),
                            ("V".into(), Value::int(v)),
                        ]));
                    }
                }
            }
        }
    }
    out
}

fn rel_constraint() -> impl Strategy<Value = Constraint> {
    use Kind::*;
    let rel = || proptest::sample::select(vec![Term::var("R"), Term::var("G")]);
    let key = || prop_oneof![Just(Term::var("K")), proptest::sample::select(addrs()[..2].to_vec()).prop_map(Term::Lit)];
    let val = || prop_oneof![Just(Term::var("V")), (0i64..2).prop_map(Term::int)];
    prop_oneof![
        (rel(), rel(), rel()).prop_map(|(a, b, c)| Constraint::new(Oplus, vec![a, b, c])),
        (rel(), prop_oneof![Just(Term::var("D")), Just(Term::Lit(Value::set([])))]).prop_map(|(r, d)| Constraint::new(Dom, vec![r, d])),
        (rel(), rel()).prop_map(|(r, g)| Constraint::new(Dres, vec![Term::var("D"), r, g])),
        (rel(), key(), val()).prop_map(|(r, k, v)| Constraint::new(Apply, vec![r, k, v])),
        (proptest::sample::select(vec![Pfun, Npfun]), rel()).prop_map(|(k, r)| Constraint::new(k, vec![r])),
        (proptest::sample::select(vec![In, Nin]), key(), val(), rel())
            .prop_map(|(k, x, y, r)| Constraint::new(k, vec![Term::tuple(vec![x, y]), r])),
        (rel(), rel()).prop_map(|(a, b)| Constraint::neq(a, b)),
        (proptest::sample::select(vec![In, Nin]), key()).prop_map(|(k, x)| Constraint::new(k, vec![x, Term::var("D")])),
    ]
}

fn rel_formula() -> impl Strategy<Value = Formula> {
    proptest::collection::vec(proptest::collection::vec(rel_constraint(), 1..4), 1..3)
        .prop_map(|clauses| Formula { sorts: rel_sorts(), clauses })
}

#[test]
fn relational_solve_agrees_with_enumeration() {
    let u = rel_universe();
    let solver = Solver::new(tiny_scope());
    for f in sample(rel_formula(), 400, 31) {
        let expected = !models(&f, &u).is_empty();
        match solver.solve(&f) {
            SolveResult::Sat(w) => {
                assert!(expected, "Sat but no model: {}", print_formula(&f));
                assert!(eval_formula(&f, &w).unwrap(), "bad witness {w:?} for {}", print_formula(&f));
            }
            SolveResult::Unsat => assert!(!expected, "Unsat but a model exists: {}", print_formula(&f)),
            SolveResult::Unknown(why) => panic!("Unknown ({why}): {}", print_formula(&f)),
        }
    }
}

#[test]
fn relational_negation_is_the_complement() {
    let u = rel_universe();
    let solver = Solver::new(tiny_scope());
    for f in sample(rel_formula(), 40, 32) {
        let not_f = negate(&f).unwrap();
        for env in u.iter().step_by(97) {
            let holds = eval_formula(&f, env).unwrap();
            let neg = solver.solve(&bind(env).and(&not_f));
            assert_eq!(neg.is_sat(), !holds, "{} at {env:?}", print_formula(&f));
        }
    }
}

#[test]
fn bundled_obligations_are_not_vacuous() {
    use setforge::goals::{self, Builtin};
    for name in ["checkpoint-pfun", "psd-psas-disjoint"] {
        let Some(Builtin::Obligation(ob)) = goals::builtin(name) else { panic!("{name}") };
        let solver = Solver::new(ob.scope.clone());
        let SolveResult::Sat(w) = solver.solve(&ob.hyp) else { panic!("{name}: hypothesis has no model") };
        assert!(eval_formula(&ob.hyp, &w).unwrap());
        assert!(eval_formula(&ob.concl, &w).unwrap(), "{name}");
    }
}
