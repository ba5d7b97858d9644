mod common;

use common::{canon, elems, oracle, powerset, relations};
use num_bigint::BigInt;
use proptest::prelude::*;
use setforge::kernel::{self, KernelError};
use setforge::value::{Atom, Value};

fn atoms3() -> Vec<Value> {
    ["a1", "a2", "a3"].map(Value::atom).to_vec()
}

#[test]
fn set_algebra_exhaustive_over_three_atoms() {
    let subsets = powerset(&atoms3());
    for a in &subsets {
        for b in &subsets {
            let (av, bv) = (Value::set(a.clone()), Value::set(b.clone()));
            assert_eq!(elems(&kernel::union(&av, &bv).unwrap()), oracle::union(a, b));
            assert_eq!(elems(&kernel::difference(&av, &bv).unwrap()), oracle::difference(a, b));
            let inter = canon(a.iter().filter(|x| b.contains(x)).cloned());
            assert_eq!(elems(&kernel::intersection(&av, &bv).unwrap()), inter);
            assert_eq!(kernel::subset(&av, &bv).unwrap(), a.iter().all(|x| b.contains(x)));
            assert_eq!(kernel::disjoint(&av, &bv).unwrap(), inter.is_empty());
        }
    }
}

#[test]
fn override_preserves_partial_functions() {
    let keys = [Value::atom("a1"), Value::atom("a2")];
    let vals = [Value::int(0), Value::int(1)];
    let rels = relations(&keys, &vals, 4);
    let mut checked = 0;
    for r in &rels {
        for g in &rels {
            let (pr, pg) = (kernel::is_pfun(r).unwrap(), kernel::is_pfun(g).unwrap());
            let o = kernel::override_rel(r, g).unwrap();
            if pr && pg {
                assert!(kernel::is_pfun(&o).unwrap(), "{r:?} ⊕ {g:?}");
                checked += 1;
            }
            // dom (R ⊕ G) = dom R ∪ dom G
            let d = kernel::union(&kernel::dom(r).unwrap(), &kernel::dom(g).unwrap()).unwrap();
            assert_eq!(kernel::dom(&o).unwrap(), d);
        }
    }
    assert_eq!(checked, 81);
}

#[test]
fn apply_needs_a_function_and_a_key() {
    let f = common::rel_value(&[(Value::atom("a1"), Value::int(3))]);
    assert_eq!(kernel::apply(&f, &Value::atom("a1")).unwrap(), Value::int(3));
    assert!(kernel::apply(&f, &Value::atom("a2")).is_err());
    let g = common::rel_value(&[(Value::atom("a1"), Value::int(3)), (Value::atom("a1"), Value::int(4))]);
    assert!(matches!(kernel::apply(&g, &Value::atom("a1")), Err(KernelError::Ambiguous(_))));
}

#[test]
fn records_get_and_set() {
    let r = setforge::lang::parse_value("{[as,{a1}],[bf,{}],[tp,{}]}").unwrap();
    let as_ = Atom::new("as");
    assert_eq!(kernel::record_get(&r, &as_).unwrap(), Value::set([Value::atom("a1")]));
    let r2 = kernel::record_set(&r, &as_, Value::set([])).unwrap();
    assert_eq!(kernel::record_get(&r2, &as_).unwrap(), Value::set([]));
    assert_eq!(kernel::record_get(&r2, &Atom::new("bf")).unwrap(), Value::set([]));
    assert_eq!(kernel::size(&r2).unwrap(), 3);
    assert!(matches!(kernel::record_get(&r, &Atom::new("missing")), Err(KernelError::MissingField(_))));
}

#[test]
fn sequences() {
    let s = Value::Seq(vec![Value::int(1), Value::int(2)]);
    assert_eq!(kernel::seq_head(&s).unwrap(), Value::int(1));
    assert_eq!(kernel::seq_tail(&s).unwrap(), Value::Seq(vec![Value::int(2)]));
    assert_eq!(kernel::seq_nth(&s, &BigInt::from(2)).unwrap(), Value::int(2));
    assert!(kernel::seq_nth(&s, &BigInt::from(0)).is_err());
    assert!(kernel::seq_head(&Value::Seq(vec![])).is_err());
    let c = kernel::seq_concat(&s, &s).unwrap();
    assert_eq!(kernel::size(&c).unwrap(), 4);
}

#[test]
fn type_errors_are_reported() {
    let a = Value::atom("a1");
    assert!(matches!(kernel::union(&a, &Value::set([])), Err(KernelError::Type { .. })));
    assert!(matches!(kernel::dom(&Value::set([Value::int(1)])), Err(KernelError::Type { .. })));
    assert_eq!(kernel::int_div(&BigInt::from(1), &BigInt::from(0)), Err(KernelError::DivisionByZero));
    assert!(matches!(kernel::apply(&Value::set([]), &a), Err(KernelError::OutsideDomain(_))));
}

proptest! {
    #[test]
    fn override_matches_definition(r in common::pair_list(), g in common::pair_list()) {
        let got = kernel::override_rel(&common::rel_value(&r), &common::rel_value(&g)).unwrap();
        prop_assert_eq!(elems(&got), oracle::override_rel(&r, &g));
    }

    #[test]
    fn override_is_associative(r in common::pair_list(), g in common::pair_list(), h in common::pair_list()) {
        let (r, g, h) = (common::rel_value(&r), common::rel_value(&g), common::rel_value(&h));
        let left = kernel::override_rel(&kernel::override_rel(&r, &g).unwrap(), &h).unwrap();
        let right = kernel::override_rel(&r, &kernel::override_rel(&g, &h).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn dres_keeps_only_listed_keys(d in common::atom_set(3), r in common::pair_list()) {
        let got = kernel::dres(&Value::set(d.clone()), &common::rel_value(&r)).unwrap();
        prop_assert_eq!(elems(&got), oracle::dres(&d, &r));
        let dom = kernel::dom(&got).unwrap();
        prop_assert!(kernel::subset(&dom, &Value::set(d)).unwrap());
    }

    #[test]
    fn ris_matches_comprehension(ns in common::int_list()) {
        let got = kernel::ris_eval(
            &Value::set(ns.clone()),
            |x| Ok::<_, KernelError>(x.as_int().is_some_and(|n| n % 2u8 == BigInt::from(0))),
            |x| Ok(Value::Tuple(vec![Value::atom("this"), x.clone(), Value::atom("connectMsg")])),
        )
        .unwrap();
        let want = oracle::ris(
            &ns,
            |x| x.as_int().is_some_and(|n| n % 2u8 == BigInt::from(0)),
            |x| Value::Tuple(vec![Value::atom("this"), x.clone(), Value::atom("connectMsg")]),
        );
        prop_assert_eq!(elems(&got), want);
    }

    #[test]
    fn union_difference_identities(a in common::atom_set(4), b in common::atom_set(4)) {
        let (a, b) = (Value::set(a), Value::set(b));
        let u = kernel::union(&a, &b).unwrap();
        let d = kernel::difference(&u, &b).unwrap();
        prop_assert!(kernel::disjoint(&d, &b).unwrap());
        prop_assert_eq!(kernel::union(&d, &b).unwrap(), u);
    }
}
