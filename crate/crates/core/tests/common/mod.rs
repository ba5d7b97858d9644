//! Generators and definitional oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use setforge::formula::{Constraint, Formula, Kind, Ris, Sort, Term};
use setforge::value::{Atom, Namespace, Value};

pub const ATOMS: [&str; 5] = ["a1", "a2", "a3", "this", "null"];
pub const VARS: [&str; 6] = ["X", "Y", "Z", "As", "Acc", "S_"];

/// `n` values drawn from `s` with a fixed seed, so runs are repeatable.
pub fn sample<S: Strategy>(s: S, n: usize, seed: u8) -> Vec<S::Value> {
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    (0..n)
        .map(|_| s.new_tree(&mut runner).expect("strategy generates").current())
        .collect()
}

pub fn atom() -> impl Strategy<Value = Value> {
    proptest::sample::select(&ATOMS[..]).prop_map(Value::atom)
}

pub fn small_int() -> impl Strategy<Value = Value> {
    (-5i64..40).prop_map(Value::int)
}

pub fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![atom(), small_int()];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Value::Tuple),
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::set),
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::Seq),
            (proptest::sample::select(&["f", "addrMsg"][..]), proptest::collection::vec(inner, 1..3))
                .prop_map(|(f, xs)| Value::compound(f, xs)),
        ]
    })
}

/// A set of atoms from a universe of `k`.
pub fn atom_set(k: usize) -> impl Strategy<Value = Vec<Value>> {
    proptest::collection::vec(proptest::sample::select(&ATOMS[..k]), 0..=k)
        .prop_map(|xs| xs.into_iter().map(Value::atom).collect())
}

/// A relation as a pair list (possibly with duplicates) over small keys and
/// values.
pub fn pair_list() -> impl Strategy<Value = Vec<(Value, Value)>> {
    proptest::collection::vec((prop_oneof![atom(), (0i64..4).prop_map(Value::int)], (0i64..4).prop_map(Value::int)), 0..6)
}

pub fn int_list() -> impl Strategy<Value = Vec<Value>> {
    proptest::collection::vec((0i64..8).prop_map(Value::int), 0..6)
}

pub fn rel_value(pairs: &[(Value, Value)]) -> Value {
    Value::set(pairs.iter().map(|(a, b)| Value::pair(a.clone(), b.clone())))
}

/// Sorted, duplicate-free elements; the oracles' notion of a set.
pub fn canon(xs: impl IntoIterator<Item = Value>) -> Vec<Value> {
    let mut v: Vec<Value> = xs.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

pub fn elems(v: &Value) -> Vec<Value> {
    v.as_set().expect("a set").iter().cloned().collect()
}

pub mod oracle {
    use super::*;

    pub fn union(a: &[Value], b: &[Value]) -> Vec<Value> {
        canon(a.iter().chain(b).cloned())
    }

    pub fn difference(a: &[Value], b: &[Value]) -> Vec<Value> {
        canon(a.iter().filter(|x| !b.contains(x)).cloned())
    }

    /// `{(x,y) ∈ r | x ∉ dom g} ∪ g`.
    pub fn override_rel(r: &[(Value, Value)], g: &[(Value, Value)]) -> Vec<Value> {
        let dom_g: Vec<&Value> = g.iter().map(|(x, _)| x).collect();
        canon(
            r.iter()
                .filter(|(x, _)| !dom_g.contains(&x))
                .chain(g)
                .map(|(x, y)| Value::pair(x.clone(), y.clone())),
        )
    }

    pub fn dres(d: &[Value], r: &[(Value, Value)]) -> Vec<Value> {
        canon(r.iter().filter(|(x, _)| d.contains(x)).map(|(x, y)| Value::pair(x.clone(), y.clone())))
    }

    pub fn ris(domain: &[Value], filter: impl Fn(&Value) -> bool, pattern: impl Fn(&Value) -> Value) -> Vec<Value> {
        let mut out = Vec::new();
        for x in domain {
            if filter(x) {
                out.push(pattern(x));
            }
        }
        canon(out)
    }

    pub fn dom(r: &[(Value, Value)]) -> Vec<Value> {
        canon(r.iter().map(|(x, _)| x.clone()))
    }

    pub fn is_pfun(r: &[(Value, Value)]) -> bool {
        let r = canon(r.iter().map(|(x, y)| Value::pair(x.clone(), y.clone())));
        let keys: Vec<Value> = r
            .iter()
            .map(|p| match p {
                Value::Tuple(xy) => xy[0].clone(),
                _ => unreachable!(),
            })
            .collect();
        canon(keys.clone()).len() == keys.len()
    }
}

/// Every subset of `xs`.
pub fn powerset<T: Clone>(xs: &[T]) -> Vec<Vec<T>> {
    (0..1usize << xs.len())
        .map(|m| xs.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// All relations over `keys × vals` with at most `max` pairs.
pub fn relations(keys: &[Value], vals: &[Value], max: usize) -> Vec<Value> {
    let pairs: Vec<Value> = keys
        .iter()
        .flat_map(|k| vals.iter().map(move |v| Value::pair(k.clone(), v.clone())))
        .collect();
    powerset(&pairs)
        .into_iter()
        .filter(|s| s.len() <= max)
        .map(Value::set)
        .collect()
}

// Formula generation. Terms are built through the normalizing constructors
// so generated formulas are already in the form the parser produces.

fn var() -> impl Strategy<Value = Term> {
    proptest::sample::select(&VARS[..]).prop_map(Term::var)
}

fn scalar_term() -> impl Strategy<Value = Term> {
    prop_oneof![var(), atom().prop_map(Term::Lit), small_int().prop_map(Term::Lit)]
}

pub fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![3 => scalar_term(), 1 => value().prop_map(Term::Lit)];
    leaf.prop_recursive(2, 16, 3, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Term::tuple),
            proptest::collection::vec(inner.clone(), 0..3).prop_map(|xs| Term::SeqExt(xs).normalize()),
            (proptest::sample::select(&["f", "addrMsg"][..]), proptest::collection::vec(inner.clone(), 1..3))
                .prop_map(|(f, xs)| Term::Compound(Atom::new(f), xs).normalize()),
            (proptest::collection::vec(scalar_term(), 1..3), proptest::option::of(var()))
                .prop_map(|(xs, tail)| Term::set_ext(xs, tail)),
            (
                proptest::collection::btree_map(proptest::sample::select(&["as", "bf", "tp", "acc"][..]), inner, 1..3),
                proptest::option::of(var())
            )
                .prop_map(|(fs, rest)| Term::record(fs.into_iter().collect(), rest)),
            (var(), scalar_term()).prop_map(|(d, x)| {
                Term::Ris(Box::new(Ris {
                    binder: "B".into(),
                    domain: d,
                    filter: Formula::truth(),
                    pattern: Term::tuple(vec![Term::atom("this"), Term::var("B"), x]),
                }))
            }),
        ]
    })
}

pub fn constraint() -> impl Strategy<Value = Constraint> {
    let kinds: Vec<Kind> = Kind::ALL.to_vec();
    (proptest::sample::select(kinds), proptest::collection::vec(term(), 3))
        .prop_map(|(k, mut args)| {
            args.truncate(k.arity());
            Constraint::new(k, args)
        })
}

pub fn sort() -> impl Strategy<Value = Sort> {
    let leaf = prop_oneof![
        Just(Sort::Int),
        Just(Sort::Atoms(Namespace::Addr)),
        Just(Sort::Atoms(Namespace::Tx)),
        Just(Sort::enumeration(&["initial", "ccbegins"])),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Sort::set),
            inner.clone().prop_map(|s| Sort::Seq(Box::new(s))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Sort::rel(a, b)),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| Sort::Tuple(vec![a, b, c])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Sort::record(vec![("nonce", a), ("bal", b)])),
            inner.clone().prop_map(|s| Sort::Ctor(Atom::new("f"), vec![s])),
            (inner.clone(), inner).prop_map(|(a, b)| Sort::Union(vec![a, b])),
        ]
    })
}

fn conj() -> impl Strategy<Value = Vec<Constraint>> {
    proptest::collection::vec(constraint(), 1..4).prop_map(|cs| {
        let mut out: Vec<Constraint> = Vec::new();
        for c in cs {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    })
}

pub fn formula() -> impl Strategy<Value = Formula> {
    (
        proptest::collection::btree_map(var().prop_map(|t| t.as_var().unwrap().to_string()), sort(), 0..3),
        proptest::collection::vec(conj(), 1..3),
    )
        .prop_map(|(sorts, clauses): (BTreeMap<String, Sort>, Vec<Vec<Constraint>>)| {
            let mut uniq: Vec<Vec<Constraint>> = Vec::new();
            for c in clauses {
                if !uniq.contains(&c) {
                    uniq.push(c);
                }
            }
            Formula { sorts, clauses: uniq }
        })
}

/// Atoms of a value, by name.
pub fn atom_names(v: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    v.for_each_atom(&mut |a| {
        out.insert(a.name().to_string());
    });
    out
}
