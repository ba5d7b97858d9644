//! Set, relation, sequence and record operators over ground [`Value`]s.
//!
//! All operations are pure. Relations are sets of pairs; records are
//! relations keyed by field atoms.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};
use thiserror::Error;

use crate::value::{Atom, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("type error: expected {expected}, found {found}")]
    Type {
        expected: &'static str,
        found: &'static str,
    },
    #[error("application outside domain: {0:?} is not in the domain")]
    OutsideDomain(Value),
    #[error("ambiguous application: the relation is not a partial function at {0:?}")]
    Ambiguous(Value),
    #[error("sequence index {index} out of range for length {len}")]
    Range { index: BigInt, len: usize },
    #[error("tail of an empty sequence")]
    EmptySeq,
    #[error("missing record field `{0}`")]
    MissingField(String),
    #[error("division by zero")]
    DivisionByZero,
}

pub type Result<T> = std::result::Result<T, KernelError>;

fn type_err<T>(expected: &'static str, found: &Value) -> Result<T> {
    Err(KernelError::Type {
        expected,
        found: found.kind_name(),
    })
}

pub fn expect_set(v: &Value) -> Result<&BTreeSet<Value>> {
    match v {
        Value::Set(s) => Ok(s),
        other => type_err("set", other),
    }
}

pub fn expect_seq(v: &Value) -> Result<&[Value]> {
    match v {
        Value::Seq(s) => Ok(s),
        other => type_err("sequence", other),
    }
}

pub fn expect_int(v: &Value) -> Result<&BigInt> {
    match v {
        Value::Int(n) => Ok(n),
        other => type_err("integer", other),
    }
}

/// Iterates the pairs of a binary relation, failing on any non-pair element.
pub fn pairs(r: &Value) -> Result<Vec<(&Value, &Value)>> {
    expect_set(r)?
        .iter()
        .map(|e| match e {
            Value::Tuple(xs) if xs.len() == 2 => Ok((&xs[0], &xs[1])),
            other => type_err("pair", other),
        })
        .collect()
}

pub fn union(a: &Value, b: &Value) -> Result<Value> {
    let (a, b) = (expect_set(a)?, expect_set(b)?);
    Ok(Value::Set(a.union(b).cloned().collect()))
}

pub fn difference(a: &Value, b: &Value) -> Result<Value> {
    let (a, b) = (expect_set(a)?, expect_set(b)?);
    Ok(Value::Set(a.difference(b).cloned().collect()))
}

pub fn intersection(a: &Value, b: &Value) -> Result<Value> {
    let (a, b) = (expect_set(a)?, expect_set(b)?);
    Ok(Value::Set(a.intersection(b).cloned().collect()))
}

pub fn member(x: &Value, s: &Value) -> Result<bool> {
    Ok(expect_set(s)?.contains(x))
}

pub fn subset(a: &Value, b: &Value) -> Result<bool> {
    let (a, b) = (expect_set(a)?, expect_set(b)?);
    Ok(a.is_subset(b))
}

pub fn disjoint(a: &Value, b: &Value) -> Result<bool> {
    let (a, b) = (expect_set(a)?, expect_set(b)?);
    Ok(a.is_disjoint(b))
}

/// Cardinality of a set or length of a sequence.
pub fn size(v: &Value) -> Result<usize> {
    match v {
        Value::Set(s) => Ok(s.len()),
        Value::Seq(s) => Ok(s.len()),
        other => type_err("set or sequence", other),
    }
}

pub fn dom(r: &Value) -> Result<Value> {
    Ok(Value::Set(
        pairs(r)?.into_iter().map(|(x, _)| x.clone()).collect(),
    ))
}

pub fn ran(r: &Value) -> Result<Value> {
    Ok(Value::Set(
        pairs(r)?.into_iter().map(|(_, y)| y.clone()).collect(),
    ))
}

/// `r ⊕ g`: pairs of `g` replace every pair of `r` with the same first
/// component.
pub fn override_rel(r: &Value, g: &Value) -> Result<Value> {
    let g_pairs = pairs(g)?;
    let g_dom: BTreeSet<&Value> = g_pairs.iter().map(|(x, _)| *x).collect();
    let mut out: BTreeSet<Value> = pairs(r)?
        .into_iter()
        .filter(|(x, _)| !g_dom.contains(x))
        .map(|(x, y)| Value::pair(x.clone(), y.clone()))
        .collect();
    out.extend(expect_set(g)?.iter().cloned());
    Ok(Value::Set(out))
}

/// Domain restriction `d ◁ r`.
pub fn dres(d: &Value, r: &Value) -> Result<Value> {
    let d = expect_set(d)?;
    Ok(Value::Set(
        pairs(r)?
            .into_iter()
            .filter(|(x, _)| d.contains(*x))
            .map(|(x, y)| Value::pair(x.clone(), y.clone()))
            .collect(),
    ))
}

pub fn is_pfun(r: &Value) -> Result<bool> {
    let ps = pairs(r)?;
    let mut seen = BTreeSet::new();
    Ok(ps.into_iter().all(|(x, _)| seen.insert(x)))
}

/// Function application. Fails when `x` is outside the domain or when `f`
/// relates `x` to more than one value.
pub fn apply(f: &Value, x: &Value) -> Result<Value> {
    let mut found = None;
    for (a, b) in pairs(f)? {
        if a == x {
            if found.is_some() {
                return Err(KernelError::Ambiguous(x.clone()));
            }
            found = Some(b);
        }
    }
    found
        .cloned()
        .ok_or_else(|| KernelError::OutsideDomain(x.clone()))
}

/// Evaluates a restricted intensional set `{pattern(x) | x ∈ domain, filter(x)}`.
pub fn ris_eval<F, P, E>(domain: &Value, mut filter: F, mut pattern: P) -> std::result::Result<Value, E>
where
    F: FnMut(&Value) -> std::result::Result<bool, E>,
    P: FnMut(&Value) -> std::result::Result<Value, E>,
    E: From<KernelError>,
{
    let mut out = BTreeSet::new();
    for x in expect_set(domain)? {
        if filter(x)? {
            out.insert(pattern(x)?);
        }
    }
    Ok(Value::Set(out))
}

pub fn seq_head(s: &Value) -> Result<Value> {
    expect_seq(s)?.first().cloned().ok_or(KernelError::EmptySeq)
}

pub fn seq_tail(s: &Value) -> Result<Value> {
    match expect_seq(s)? {
        [] => Err(KernelError::EmptySeq),
        [_, rest @ ..] => Ok(Value::Seq(rest.to_vec())),
    }
}

pub fn seq_concat(a: &Value, b: &Value) -> Result<Value> {
    let mut out = expect_seq(a)?.to_vec();
    out.extend_from_slice(expect_seq(b)?);
    Ok(Value::Seq(out))
}

/// 1-based indexing.
pub fn seq_nth(s: &Value, i: &BigInt) -> Result<Value> {
    let elems = expect_seq(s)?;
    let out_of_range = || KernelError::Range {
        index: i.clone(),
        len: elems.len(),
    };
    if !i.is_positive() {
        return Err(out_of_range());
    }
    let idx = (i - BigInt::one()).to_usize().ok_or_else(out_of_range)?;
    elems.get(idx).cloned().ok_or_else(out_of_range)
}

fn field_key(f: &Atom) -> Value {
    Value::Atom(f.clone())
}

pub fn record_get(r: &Value, f: &Atom) -> Result<Value> {
    let key = field_key(f);
    match apply(r, &key) {
        Err(KernelError::OutsideDomain(_)) => Err(KernelError::MissingField(f.name().to_string())),
        other => other,
    }
}

pub fn record_set(r: &Value, f: &Atom, v: Value) -> Result<Value> {
    override_rel(r, &Value::set([Value::pair(field_key(f), v)]))
}

/// Integer division rounding toward negative infinity.
pub fn int_div(a: &BigInt, b: &BigInt) -> Result<BigInt> {
    use num_integer::Integer;
    if b.sign() == num_bigint::Sign::NoSign {
        return Err(KernelError::DivisionByZero);
    }
    Ok(a.div_floor(b))
}
