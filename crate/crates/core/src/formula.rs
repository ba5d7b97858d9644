//! Constraint formulas: terms with variables, atomic constraints, sorts and
//! disjunctive normal form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::value::{Atom, Namespace, Value};

/// Variables introduced by [`negate`] for functional results are named with
/// this prefix followed by digits. They are treated as existentially local to
/// the conjunction that defines them.
pub const NEGATION_LOCAL_PREFIX: &str = "_N";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Lit(Value),
    Var(String),
    /// Tuple with at least one non-ground component.
    Tuple(Vec<Term>),
    Compound(Atom, Vec<Term>),
    /// `{t1,...,tn / tail}`: the set `{t1..tn} ∪ tail` with every `ti ∉ tail`.
    SetExt {
        elems: Vec<Term>,
        tail: Option<Box<Term>>,
    },
    /// `{[f1,t1],...,[fn,tn] / rest}`: a record with the named fields plus
    /// whatever `rest` holds. Fields are sorted and distinct.
    Record {
        fields: Vec<(Atom, Term)>,
        rest: Option<Box<Term>>,
    },
    SeqExt(Vec<Term>),
    Ris(Box<Ris>),
}

/// Restricted intensional set `{pattern | binder ∈ domain ∧ filter}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ris {
    pub binder: String,
    pub domain: Term,
    pub filter: Formula,
    pub pattern: Term,
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn atom(name: &str) -> Term {
        Term::Lit(Value::atom(name))
    }

    pub fn int(n: i64) -> Term {
        Term::Lit(Value::int(n))
    }

    pub fn empty_set() -> Term {
        Term::Lit(Value::empty_set())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_value(&self) -> Option<&Value> {
        match self {
            Term::Lit(v) => Some(v),
            _ => None,
        }
    }

    pub fn tuple(elems: Vec<Term>) -> Term {
        Term::Tuple(elems).normalize()
    }

    pub fn set_ext(elems: Vec<Term>, tail: Option<Term>) -> Term {
        Term::SetExt {
            elems,
            tail: tail.map(Box::new),
        }
        .normalize()
    }

    pub fn record(fields: Vec<(&str, Term)>, rest: Option<Term>) -> Term {
        Term::Record {
            fields: fields
                .into_iter()
                .map(|(f, t)| (Atom::with_ns(f, Namespace::Field), t))
                .collect(),
            rest: rest.map(Box::new),
        }
        .normalize()
    }

    /// Collapses ground structure into literals and sorts record fields.
    /// Ground set extensions with a literal tail become literal sets.
    pub fn normalize(self) -> Term {
        match self {
            Term::Tuple(elems) => {
                let elems: Vec<Term> = elems.into_iter().map(Term::normalize).collect();
                match all_lits(&elems) {
                    Some(vs) => Term::Lit(Value::Tuple(vs)),
                    None => Term::Tuple(elems),
                }
            }
            Term::Compound(f, args) => {
                let args: Vec<Term> = args.into_iter().map(Term::normalize).collect();
                match all_lits(&args) {
                    Some(vs) => Term::Lit(Value::Compound(f, vs)),
                    None => Term::Compound(f, args),
                }
            }
            Term::SeqExt(elems) => {
                let elems: Vec<Term> = elems.into_iter().map(Term::normalize).collect();
                match all_lits(&elems) {
                    Some(vs) => Term::Lit(Value::Seq(vs)),
                    None => Term::SeqExt(elems),
                }
            }
            Term::SetExt { elems, tail } => {
                let elems: Vec<Term> = elems.into_iter().map(Term::normalize).collect();
                let tail = tail.map(|t| Box::new(t.normalize()));
                if elems.is_empty() {
                    if let Some(t) = tail {
                        return *t;
                    }
                }
                match (all_lits(&elems), tail.as_deref()) {
                    (Some(vs), None) => Term::Lit(Value::set(vs)),
                    (Some(vs), Some(Term::Lit(Value::Set(rest)))) if vs.iter().all(|v| !rest.contains(v)) => {
                        let mut s = rest.clone();
                        s.extend(vs);
                        Term::Lit(Value::Set(s))
                    }
                    _ => Term::SetExt { elems, tail },
                }
            }
            Term::Record { fields, rest } => {
                let mut fields: Vec<(Atom, Term)> =
                    fields.into_iter().map(|(f, t)| (f, t.normalize())).collect();
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                let mut rest = rest.map(|t| Box::new(t.normalize()));
                // Absorb a nested record or literal rest whose fields are disjoint.
                match rest.as_deref() {
                    Some(Term::Record { fields: inner, rest: inner_rest })
                        if inner.iter().all(|(g, _)| fields.iter().all(|(f, _)| f != g)) =>
                    {
                        fields.extend(inner.iter().cloned());
                        fields.sort_by(|a, b| a.0.cmp(&b.0));
                        rest = inner_rest.clone();
                    }
                    Some(Term::Lit(Value::Set(s))) if !s.is_empty() => {
                        let pairs: Option<Vec<(Atom, Value)>> = s
                            .iter()
                            .map(|e| match e {
                                Value::Tuple(xy) if xy.len() == 2 => {
                                    xy[0].as_atom().map(|a| (a.clone(), xy[1].clone()))
                                }
                                _ => None,
                            })
                            .collect();
                        if let Some(pairs) = pairs {
                            let mut names: Vec<&Atom> = pairs.iter().map(|(a, _)| a).collect();
                            names.extend(fields.iter().map(|(f, _)| f));
                            let total = names.len();
                            names.sort();
                            names.dedup();
                            if names.len() == total {
                                fields.extend(pairs.into_iter().map(|(a, v)| (a, Term::Lit(v))));
                                fields.sort_by(|a, b| a.0.cmp(&b.0));
                                rest = None;
                            }
                        }
                    }
                    _ => {}
                }
                let lits: Option<Vec<Value>> = fields
                    .iter()
                    .map(|(f, t)| t.as_value().map(|v| Value::pair(Value::Atom(f.clone()), v.clone())))
                    .collect();
                if fields.is_empty() {
                    if let Some(r) = rest {
                        return *r;
                    }
                }
                match (lits, rest.as_deref()) {
                    (Some(ps), None) => Term::Lit(Value::set(ps)),
                    (Some(ps), Some(Term::Lit(Value::Set(r))))
                        if fields.iter().all(|(f, _)| {
                            !r.iter().any(|e| matches!(e, Value::Tuple(xy) if xy.len() == 2 && xy[0] == Value::Atom(f.clone())))
                        }) =>
                    {
                        let mut s = r.clone();
                        s.extend(ps);
                        Term::Lit(Value::Set(s))
                    }
                    _ => Term::Record { fields, rest },
                }
            }
            Term::Ris(r) => {
                let Ris {
                    binder,
                    domain,
                    filter,
                    pattern,
                } = *r;
                Term::Ris(Box::new(Ris {
                    binder,
                    domain: domain.normalize(),
                    filter,
                    pattern: pattern.normalize(),
                }))
            }
            t => t,
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, Term::Lit(_))
    }

    /// Collects free variables in first-occurrence order.
    pub fn free_vars_into(&self, out: &mut Vec<String>) {
        match self {
            Term::Lit(_) => {}
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone())
                }
            }
            Term::Tuple(xs) | Term::Compound(_, xs) | Term::SeqExt(xs) => {
                xs.iter().for_each(|x| x.free_vars_into(out))
            }
            Term::SetExt { elems, tail } => {
                elems.iter().for_each(|x| x.free_vars_into(out));
                if let Some(t) = tail {
                    t.free_vars_into(out)
                }
            }
            Term::Record { fields, rest } => {
                fields.iter().for_each(|(_, x)| x.free_vars_into(out));
                if let Some(t) = rest {
                    t.free_vars_into(out)
                }
            }
            Term::Ris(r) => {
                r.domain.free_vars_into(out);
                let mut inner = Vec::new();
                r.filter.free_vars_into(&mut inner);
                r.pattern.free_vars_into(&mut inner);
                for v in inner {
                    if v != r.binder && !out.contains(&v) {
                        out.push(v)
                    }
                }
            }
        }
    }

    /// Every variable name, bound or free.
    pub fn all_names_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Lit(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Tuple(xs) | Term::Compound(_, xs) | Term::SeqExt(xs) => {
                xs.iter().for_each(|x| x.all_names_into(out))
            }
            Term::SetExt { elems, tail } => {
                elems.iter().for_each(|x| x.all_names_into(out));
                if let Some(t) = tail {
                    t.all_names_into(out)
                }
            }
            Term::Record { fields, rest } => {
                fields.iter().for_each(|(_, x)| x.all_names_into(out));
                if let Some(t) = rest {
                    t.all_names_into(out)
                }
            }
            Term::Ris(r) => {
                out.insert(r.binder.clone());
                r.domain.all_names_into(out);
                r.filter.all_names_into(out);
                r.pattern.all_names_into(out);
            }
        }
    }

    /// Renames variables through `f`. RIS binders are renamed too.
    pub fn rename(&self, f: &mut impl FnMut(&str) -> String) -> Term {
        match self {
            Term::Lit(v) => Term::Lit(v.clone()),
            Term::Var(v) => Term::Var(f(v)),
            Term::Tuple(xs) => Term::Tuple(xs.iter().map(|x| x.rename(f)).collect()),
            Term::Compound(c, xs) => Term::Compound(c.clone(), xs.iter().map(|x| x.rename(f)).collect()),
            Term::SeqExt(xs) => Term::SeqExt(xs.iter().map(|x| x.rename(f)).collect()),
            Term::SetExt { elems, tail } => Term::SetExt {
                elems: elems.iter().map(|x| x.rename(f)).collect(),
                tail: tail.as_ref().map(|t| Box::new(t.rename(f))),
            },
            Term::Record { fields, rest } => Term::Record {
                fields: fields.iter().map(|(a, x)| (a.clone(), x.rename(f))).collect(),
                rest: rest.as_ref().map(|t| Box::new(t.rename(f))),
            },
            Term::Ris(r) => Term::Ris(Box::new(Ris {
                binder: f(&r.binder),
                domain: r.domain.rename(f),
                filter: r.filter.rename(f),
                pattern: r.pattern.rename(f),
            })),
        }
    }

    /// Replaces free occurrences of variables by terms and renormalizes.
    pub fn substitute(&self, sub: &BTreeMap<String, Term>) -> Term {
        self.subst_inner(sub).normalize()
    }

    fn subst_inner(&self, sub: &BTreeMap<String, Term>) -> Term {
        match self {
            Term::Lit(v) => Term::Lit(v.clone()),
            Term::Var(v) => sub.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())),
            Term::Tuple(xs) => Term::Tuple(xs.iter().map(|x| x.subst_inner(sub)).collect()),
            Term::Compound(c, xs) => Term::Compound(c.clone(), xs.iter().map(|x| x.subst_inner(sub)).collect()),
            Term::SeqExt(xs) => Term::SeqExt(xs.iter().map(|x| x.subst_inner(sub)).collect()),
            Term::SetExt { elems, tail } => Term::SetExt {
                elems: elems.iter().map(|x| x.subst_inner(sub)).collect(),
                tail: tail.as_ref().map(|t| Box::new(t.subst_inner(sub))),
            },
            Term::Record { fields, rest } => Term::Record {
                fields: fields.iter().map(|(a, x)| (a.clone(), x.subst_inner(sub))).collect(),
                rest: rest.as_ref().map(|t| Box::new(t.subst_inner(sub))),
            },
            Term::Ris(r) => {
                let mut inner = sub.clone();
                inner.remove(&r.binder);
                Term::Ris(Box::new(Ris {
                    binder: r.binder.clone(),
                    domain: r.domain.subst_inner(sub),
                    filter: r.filter.substitute(&inner),
                    pattern: r.pattern.subst_inner(&inner),
                }))
            }
        }
    }
}

fn all_lits(ts: &[Term]) -> Option<Vec<Value>> {
    ts.iter().map(|t| t.as_value().cloned()).collect()
}

impl From<Value> for Term {
    fn from(v: Value) -> Self {
        Term::Lit(v)
    }
}

/// Atomic constraint kinds. Functional kinds put their result last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Eq,
    Neq,
    In,
    Nin,
    Un,
    Diff,
    Inters,
    Disj,
    Ndisj,
    Subset,
    Nsubset,
    Dom,
    Ran,
    Apply,
    Oplus,
    Dres,
    Pfun,
    Npfun,
    SeqHead,
    SeqTail,
    SeqConcat,
    SeqNth,
    Size,
    Plus,
    Minus,
    Times,
    IntDiv,
    Le,
    Lt,
}

impl Kind {
    pub const ALL: [Kind; 29] = [
        Kind::Eq,
        Kind::Neq,
        Kind::In,
        Kind::Nin,
        Kind::Un,
        Kind::Diff,
        Kind::Inters,
        Kind::Disj,
        Kind::Ndisj,
        Kind::Subset,
        Kind::Nsubset,
        Kind::Dom,
        Kind::Ran,
        Kind::Apply,
        Kind::Oplus,
        Kind::Dres,
        Kind::Pfun,
        Kind::Npfun,
        Kind::SeqHead,
        Kind::SeqTail,
        Kind::SeqConcat,
        Kind::SeqNth,
        Kind::Size,
        Kind::Plus,
        Kind::Minus,
        Kind::Times,
        Kind::IntDiv,
        Kind::Le,
        Kind::Lt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Eq => "eq",
            Kind::Neq => "neq",
            Kind::In => "in",
            Kind::Nin => "nin",
            Kind::Un => "un",
            Kind::Diff => "diff",
            Kind::Inters => "inters",
            Kind::Disj => "disj",
            Kind::Ndisj => "ndisj",
            Kind::Subset => "subset",
            Kind::Nsubset => "nsubset",
            Kind::Dom => "dom",
            Kind::Ran => "ran",
            Kind::Apply => "apply",
            Kind::Oplus => "oplus",
            Kind::Dres => "dres",
            Kind::Pfun => "pfun",
            Kind::Npfun => "npfun",
            Kind::SeqHead => "seq_head",
            Kind::SeqTail => "seq_tail",
            Kind::SeqConcat => "seq_concat",
            Kind::SeqNth => "seq_nth",
            Kind::Size => "size",
            Kind::Plus => "plus",
            Kind::Minus => "minus",
            Kind::Times => "times",
            Kind::IntDiv => "intdiv",
            Kind::Le => "le",
            Kind::Lt => "lt",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            Kind::Pfun | Kind::Npfun => 1,
            Kind::Eq
            | Kind::Neq
            | Kind::In
            | Kind::Nin
            | Kind::Disj
            | Kind::Ndisj
            | Kind::Subset
            | Kind::Nsubset
            | Kind::Dom
            | Kind::Ran
            | Kind::SeqHead
            | Kind::SeqTail
            | Kind::Size
            | Kind::Le
            | Kind::Lt => 2,
            Kind::Un
            | Kind::Diff
            | Kind::Inters
            | Kind::Apply
            | Kind::Oplus
            | Kind::Dres
            | Kind::SeqConcat
            | Kind::SeqNth
            | Kind::Plus
            | Kind::Minus
            | Kind::Times
            | Kind::IntDiv => 3,
        }
    }

    /// Kinds whose last argument is computed from the others.
    pub fn is_functional(self) -> bool {
        matches!(
            self,
            Kind::Un
                | Kind::Diff
                | Kind::Inters
                | Kind::Dom
                | Kind::Ran
                | Kind::Apply
                | Kind::Oplus
                | Kind::Dres
                | Kind::SeqHead
                | Kind::SeqTail
                | Kind::SeqConcat
                | Kind::SeqNth
                | Kind::Size
                | Kind::Plus
                | Kind::Minus
                | Kind::Times
                | Kind::IntDiv
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    pub kind: Kind,
    pub args: Vec<Term>,
}

impl Constraint {
    /// Panics when the argument count does not match the kind's arity; use
    /// [`Constraint::try_new`] for unchecked input.
    pub fn new(kind: Kind, args: Vec<Term>) -> Constraint {
        Constraint::try_new(kind, args).expect("constraint arity")
    }

    pub fn try_new(kind: Kind, args: Vec<Term>) -> Result<Constraint, FormulaError> {
        if args.len() != kind.arity() {
            return Err(FormulaError::Arity {
                kind: kind.name(),
                expected: kind.arity(),
                found: args.len(),
            });
        }
        Ok(Constraint {
            kind,
            args: args.into_iter().map(Term::normalize).collect(),
        })
    }

    pub fn eq(a: Term, b: Term) -> Constraint {
        Constraint::new(Kind::Eq, vec![a, b])
    }

    pub fn neq(a: Term, b: Term) -> Constraint {
        Constraint::new(Kind::Neq, vec![a, b])
    }

    pub fn free_vars_into(&self, out: &mut Vec<String>) {
        self.args.iter().for_each(|a| a.free_vars_into(out))
    }

    pub fn substitute(&self, sub: &BTreeMap<String, Term>) -> Constraint {
        Constraint {
            kind: self.kind,
            args: self.args.iter().map(|a| a.substitute(sub)).collect(),
        }
    }

    pub fn rename(&self, f: &mut impl FnMut(&str) -> String) -> Constraint {
        Constraint {
            kind: self.kind,
            args: self.args.iter().map(|a| a.rename(f).normalize()).collect(),
        }
    }
}

/// Sorts bound the values a variable may take during enumeration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Int,
    Atoms(Namespace),
    Enum(Vec<Atom>),
    Set(Box<Sort>),
    Seq(Box<Sort>),
    Tuple(Vec<Sort>),
    /// Fields sorted by name.
    Record(Vec<(Atom, Sort)>),
    Ctor(Atom, Vec<Sort>),
    Union(Vec<Sort>),
}

impl Sort {
    pub fn rel(a: Sort, b: Sort) -> Sort {
        Sort::Set(Box::new(Sort::Tuple(vec![a, b])))
    }

    pub fn set(s: Sort) -> Sort {
        Sort::Set(Box::new(s))
    }

    pub fn record(fields: Vec<(&str, Sort)>) -> Sort {
        let mut fields: Vec<(Atom, Sort)> = fields
            .into_iter()
            .map(|(f, s)| (Atom::with_ns(f, Namespace::Field), s))
            .collect();
        fields.sort_by(|a, b| a.0.cmp(&b.0));
        Sort::Record(fields)
    }

    pub fn enumeration(names: &[&str]) -> Sort {
        Sort::Enum(names.iter().copied().map(Atom::new).collect())
    }
}

/// A formula in disjunctive normal form plus sort declarations.
///
/// `clauses` is a disjunction of conjunctions; no clauses is `false`, a
/// single empty conjunction is `true`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Formula {
    pub sorts: BTreeMap<String, Sort>,
    pub clauses: Vec<Vec<Constraint>>,
}

impl Formula {
    pub fn truth() -> Formula {
        Formula {
            sorts: BTreeMap::new(),
            clauses: vec![vec![]],
        }
    }

    pub fn falsity() -> Formula {
        Formula {
            sorts: BTreeMap::new(),
            clauses: vec![],
        }
    }

    pub fn conj(constraints: Vec<Constraint>) -> Formula {
        Formula {
            sorts: BTreeMap::new(),
            clauses: vec![constraints],
        }
    }

    pub fn with_sort(mut self, var: &str, sort: Sort) -> Formula {
        self.sorts.insert(var.to_string(), sort);
        self
    }

    pub fn is_true(&self) -> bool {
        self.clauses.iter().any(|c| c.is_empty())
    }

    /// Conjunction, distributing over disjuncts.
    pub fn and(&self, other: &Formula) -> Formula {
        let mut sorts = self.sorts.clone();
        sorts.extend(other.sorts.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut clauses = Vec::new();
        for a in &self.clauses {
            for b in &other.clauses {
                let mut c = a.clone();
                for x in b {
                    if !c.contains(x) {
                        c.push(x.clone());
                    }
                }
                clauses.push(c);
            }
        }
        Formula { sorts, clauses }
    }

    pub fn or(&self, other: &Formula) -> Formula {
        let mut sorts = self.sorts.clone();
        sorts.extend(other.sorts.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut clauses = self.clauses.clone();
        clauses.extend(other.clauses.iter().cloned());
        Formula { sorts, clauses }
    }

    /// Free variables in first-occurrence order, declared sorts first.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = self.sorts.keys().cloned().collect();
        self.free_vars_into(&mut out);
        out
    }

    pub fn free_vars_into(&self, out: &mut Vec<String>) {
        for c in self.clauses.iter().flatten() {
            c.free_vars_into(out)
        }
    }

    pub fn all_names_into(&self, out: &mut BTreeSet<String>) {
        out.extend(self.sorts.keys().cloned());
        for c in self.clauses.iter().flatten() {
            c.args.iter().for_each(|a| a.all_names_into(out))
        }
    }

    pub fn substitute(&self, sub: &BTreeMap<String, Term>) -> Formula {
        Formula {
            sorts: self
                .sorts
                .iter()
                .filter(|(k, _)| !sub.contains_key(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            clauses: self
                .clauses
                .iter()
                .map(|c| c.iter().map(|x| x.substitute(sub)).collect())
                .collect(),
        }
    }

    pub fn rename(&self, f: &mut impl FnMut(&str) -> String) -> Formula {
        Formula {
            sorts: self.sorts.iter().map(|(k, v)| (f(k), v.clone())).collect(),
            clauses: self
                .clauses
                .iter()
                .map(|c| c.iter().map(|x| x.rename(f)).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("`{kind}` takes {expected} arguments, found {found}")]
    Arity {
        kind: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("constraint `{0}` has no dual")]
    Unsupported(&'static str),
}

/// Generates variable names that do not clash with a known set.
#[derive(Debug, Clone, Default)]
pub struct Fresh {
    used: BTreeSet<String>,
    counter: usize,
}

impl Fresh {
    pub fn new(used: BTreeSet<String>) -> Fresh {
        Fresh { used, counter: 0 }
    }

    pub fn for_formula(f: &Formula) -> Fresh {
        let mut used = BTreeSet::new();
        f.all_names_into(&mut used);
        Fresh::new(used)
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn next(&mut self, prefix: &str) -> String {
        loop {
            self.counter += 1;
            let name = format!("{prefix}{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn is_negation_local(t: &Term) -> bool {
    t.as_var().is_some_and(|v| {
        v.strip_prefix(NEGATION_LOCAL_PREFIX)
            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
    })
}

/// Logical negation in disjunctive normal form.
///
/// Atomic constraints with a named dual flip to it. Functional constraints
/// `k(x.., r)` negate to `k(x.., N) ∧ N ≠ r` for a fresh local `N`, and
/// partial ones add a disjunct for the undefined case. Inside a conjunction,
/// constraints that define negation locals are kept positive.
pub fn negate(f: &Formula) -> Result<Formula, FormulaError> {
    let mut fresh = Fresh::for_formula(f);
    let mut acc = Formula::truth();
    acc.sorts = f.sorts.clone();
    for clause in &f.clauses {
        let neg = negate_conj(clause, &mut fresh)?;
        acc = acc.and(&Formula {
            sorts: BTreeMap::new(),
            clauses: neg,
        });
    }
    Ok(acc)
}

fn negate_conj(conj: &[Constraint], fresh: &mut Fresh) -> Result<Vec<Vec<Constraint>>, FormulaError> {
    let (defs, rest): (Vec<&Constraint>, Vec<&Constraint>) = conj.iter().partition(|c| {
        c.kind.is_functional() && c.args.last().is_some_and(is_negation_local)
    });
    let defs: Vec<Constraint> = defs.into_iter().cloned().collect();
    let mut out: Vec<Vec<Constraint>> = Vec::new();
    for d in &defs {
        out.extend(undefined_cases(d, fresh));
    }
    for c in rest {
        for mut disjunct in negate_atom(c, fresh)? {
            let mut full = defs.clone();
            full.append(&mut disjunct);
            out.push(full);
        }
    }
    Ok(out)
}

/// Disjuncts covering the inputs on which a partial functional constraint is
/// undefined.
fn undefined_cases(c: &Constraint, fresh: &mut Fresh) -> Vec<Vec<Constraint>> {
    let a = &c.args;
    let empty_seq = Term::Lit(Value::Seq(vec![]));
    match c.kind {
        Kind::SeqHead | Kind::SeqTail => vec![vec![Constraint::eq(a[0].clone(), empty_seq)]],
        Kind::SeqNth => {
            let len = Term::Var(fresh.next(NEGATION_LOCAL_PREFIX));
            vec![
                vec![Constraint::new(Kind::Lt, vec![a[1].clone(), Term::int(1)])],
                vec![
                    Constraint::new(Kind::Size, vec![a[0].clone(), len.clone()]),
                    Constraint::new(Kind::Lt, vec![len, a[1].clone()]),
                ],
            ]
        }
        Kind::IntDiv => vec![vec![Constraint::eq(a[1].clone(), Term::int(0))]],
        Kind::Apply => {
            let d = Term::Var(fresh.next(NEGATION_LOCAL_PREFIX));
            vec![
                vec![Constraint::new(Kind::Npfun, vec![a[0].clone()])],
                vec![
                    Constraint::new(Kind::Dom, vec![a[0].clone(), d.clone()]),
                    Constraint::new(Kind::Nin, vec![a[1].clone(), d]),
                ],
            ]
        }
        _ => vec![],
    }
}


/// Negation of one atomic constraint as a DNF. A constraint over a pattern
/// that denotes nothing is false, so its negation also covers those cases.
pub fn negate_atom(c: &Constraint, fresh: &mut Fresh) -> Result<Vec<Vec<Constraint>>, FormulaError> {
    let mut out = negate_defined(c, fresh)?;
    for a in &c.args {
        undefined_patterns(a, fresh, &mut out);
    }
    Ok(out)
}

/// Disjuncts under which some pattern inside `t` is ill-formed.
fn undefined_patterns(t: &Term, fresh: &mut Fresh, out: &mut Vec<Vec<Constraint>>) {
    match t {
        Term::Lit(_) | Term::Var(_) => {}
        Term::Tuple(xs) | Term::SeqExt(xs) | Term::Compound(_, xs) => {
            xs.iter().for_each(|x| undefined_patterns(x, fresh, out));
        }
        Term::SetExt { elems, tail } => {
            elems.iter().for_each(|x| undefined_patterns(x, fresh, out));
            if let Some(tail) = tail {
                undefined_patterns(tail, fresh, out);
                for (i, e) in elems.iter().enumerate() {
                    out.push(vec![Constraint::new(Kind::In, vec![e.clone(), (**tail).clone()])]);
                    for f in &elems[i + 1..] {
                        out.push(vec![Constraint::eq(e.clone(), f.clone())]);
                    }
                }
            }
        }
        Term::Record { fields, rest } => {
            fields.iter().for_each(|(_, x)| undefined_patterns(x, fresh, out));
            if let Some(rest) = rest {
                undefined_patterns(rest, fresh, out);
                for (f, _) in fields {
                    let keys = Term::Var(fresh.next(NEGATION_LOCAL_PREFIX));
                    out.push(vec![
                        Constraint::new(Kind::Dom, vec![(**rest).clone(), keys.clone()]),
                        Constraint::new(Kind::In, vec![Term::Lit(Value::Atom(f.clone())), keys]),
                    ]);
                }
            }
        }
        Term::Ris(r) => undefined_patterns(&r.domain, fresh, out),
    }
}

fn negate_defined(c: &Constraint, fresh: &mut Fresh) -> Result<Vec<Vec<Constraint>>, FormulaError> {
    let a = &c.args;
    let flip = |k: Kind| Ok(vec![vec![Constraint::new(k, a.clone())]]);
    match c.kind {
        Kind::Eq => flip(Kind::Neq),
        Kind::Neq => flip(Kind::Eq),
        Kind::In => flip(Kind::Nin),
        Kind::Nin => flip(Kind::In),
        Kind::Disj => flip(Kind::Ndisj),
        Kind::Ndisj => flip(Kind::Disj),
        Kind::Subset => flip(Kind::Nsubset),
        Kind::Nsubset => flip(Kind::Subset),
        Kind::Pfun => flip(Kind::Npfun),
        Kind::Npfun => flip(Kind::Pfun),
        Kind::Le => Ok(vec![vec![Constraint::new(Kind::Lt, vec![a[1].clone(), a[0].clone()])]]),
        Kind::Lt => Ok(vec![vec![Constraint::new(Kind::Le, vec![a[1].clone(), a[0].clone()])]]),
        Kind::Apply => {
            let pair = Term::tuple(vec![a[1].clone(), a[2].clone()]);
            Ok(vec![
                vec![Constraint::new(Kind::Npfun, vec![a[0].clone()])],
                vec![Constraint::new(Kind::Nin, vec![pair, a[0].clone()])],
            ])
        }
        k if k.is_functional() => {
            let local = Term::Var(fresh.next(NEGATION_LOCAL_PREFIX));
            let mut def_args = a.clone();
            let result = def_args.pop().expect("functional arity");
            def_args.push(local.clone());
            let def = Constraint::new(k, def_args);
            let mut out = undefined_cases(&def, fresh);
            out.push(vec![def, Constraint::neq(local, result)]);
            Ok(out)
        }
        k => Err(FormulaError::Unsupported(k.name())),
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
