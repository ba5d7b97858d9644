//! Ground set-theoretic values.
//!
//! A [`Value`] is an atom, an arbitrary-precision integer, a tuple, a finite
//! set, a 1-indexed sequence or a named compound term such as
//! `addrMsg({a1,a2})`. Records are sets of `[field, value]` pairs.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;

/// Given-set namespace of an atom.
///
/// The namespace is metadata: atom equality is by name, and a well-formed
/// value never uses one name in two different namespaces (see
/// [`Value::check_namespaces`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Addr,
    Hash,
    Proof,
    Tx,
    Msg,
    Field,
    Opaque,
}

impl Namespace {
    pub const ALL: [Namespace; 7] = [
        Namespace::Addr,
        Namespace::Hash,
        Namespace::Proof,
        Namespace::Tx,
        Namespace::Msg,
        Namespace::Field,
        Namespace::Opaque,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Namespace::Addr => "addr",
            Namespace::Hash => "hash",
            Namespace::Proof => "proof",
            Namespace::Tx => "tx",
            Namespace::Msg => "msg",
            Namespace::Field => "field",
            Namespace::Opaque => "opaque",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Namespace> {
        Namespace::ALL.into_iter().find(|ns| ns.keyword() == s)
    }

    /// Prefix of the atoms generated for this namespace by a solver scope.
    pub fn atom_prefix(self) -> &'static str {
        match self {
            Namespace::Addr => "a",
            Namespace::Hash => "h",
            Namespace::Proof => "pf",
            Namespace::Tx => "tx",
            Namespace::Msg => "m",
            Namespace::Field => "f",
            Namespace::Opaque => "o",
        }
    }
}

/// An atom of a given set. Compared and hashed by name only.
#[derive(Clone)]
pub struct Atom {
    name: Arc<str>,
    ns: Namespace,
}

impl Atom {
    pub fn new(name: impl AsRef<str>) -> Atom {
        Atom::with_ns(name, Namespace::Opaque)
    }

    pub fn with_ns(name: impl AsRef<str>, ns: Namespace) -> Atom {
        Atom {
            name: Arc::from(name.as_ref()),
            ns,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn namespace(&self) -> Namespace {
        self.ns
    }

    /// Returns the same atom tagged with `ns`.
    pub fn tagged(&self, ns: Namespace) -> Atom {
        Atom {
            name: self.name.clone(),
            ns,
        }
    }
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Atom {}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name.cmp(&other.name)
    }
}

impl Hash for Atom {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ns == Namespace::Opaque {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}:{}", self.ns.keyword(), self.name)
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A ground value. The derived ordering is the canonical value ordering used
/// for printing and enumeration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Atom(Atom),
    Int(BigInt),
    /// Arity is at least two.
    Tuple(Vec<Value>),
    Set(BTreeSet<Value>),
    Seq(Vec<Value>),
    /// A functor applied to arguments, e.g. `addrMsg({a1})`.
    Compound(Atom, Vec<Value>),
}

impl Value {
    pub fn atom(name: &str) -> Value {
        Value::Atom(Atom::new(name))
    }

    pub fn int(n: impl Into<BigInt>) -> Value {
        Value::Int(n.into())
    }

    pub fn empty_set() -> Value {
        Value::Set(BTreeSet::new())
    }

    pub fn set<I: IntoIterator<Item = Value>>(elems: I) -> Value {
        Value::Set(elems.into_iter().collect())
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Tuple(vec![a, b])
    }

    pub fn seq<I: IntoIterator<Item = Value>>(elems: I) -> Value {
        Value::Seq(elems.into_iter().collect())
    }

    pub fn compound(functor: &str, args: Vec<Value>) -> Value {
        Value::Compound(Atom::new(functor), args)
    }

    /// Builds a record from `(field, value)` pairs. Later duplicates replace
    /// earlier ones.
    pub fn record<'a, I: IntoIterator<Item = (&'a str, Value)>>(fields: I) -> Value {
        let mut out: std::collections::BTreeMap<Atom, Value> = Default::default();
        for (f, v) in fields {
            out.insert(Atom::with_ns(f, Namespace::Field), v);
        }
        Value::Set(
            out.into_iter()
                .map(|(f, v)| Value::pair(Value::Atom(f), v))
                .collect(),
        )
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Value>> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&Atom> {
        match self {
            Value::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Atom(_) => "atom",
            Value::Int(_) => "integer",
            Value::Tuple(_) => "tuple",
            Value::Set(_) => "set",
            Value::Seq(_) => "sequence",
            Value::Compound(..) => "compound",
        }
    }

    /// Visits every atom in the value, including compound functors.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Value::Atom(a) => f(a),
            Value::Int(_) => {}
            Value::Tuple(xs) | Value::Seq(xs) => xs.iter().for_each(|x| x.for_each_atom(f)),
            Value::Set(xs) => xs.iter().for_each(|x| x.for_each_atom(f)),
            Value::Compound(name, xs) => {
                f(name);
                xs.iter().for_each(|x| x.for_each_atom(f))
            }
        }
    }

    /// Checks that no atom name is used under two different non-opaque
    /// namespaces. Returns the offending name on failure.
    pub fn check_namespaces(&self) -> Result<(), String> {
        let mut seen: std::collections::HashMap<&str, Namespace> = Default::default();
        let mut clash = None;
        self.for_each_atom(&mut |a| {
            if a.namespace() == Namespace::Opaque || clash.is_some() {
                return;
            }
            match seen.get(a.name()) {
                Some(ns) if *ns != a.namespace() => clash = Some(a.name().to_string()),
                Some(_) => {}
                None => {
                    seen.insert(a.name(), a.namespace());
                }
            }
        });
        match clash {
            Some(name) => Err(name),
            None => Ok(()),
        }
    }
}

impl From<Atom> for Value {
    fn from(a: Atom) -> Self {
        Value::Atom(a)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(BigInt::from(n))
    }
}
