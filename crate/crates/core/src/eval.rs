//! Ground evaluation of terms, constraints and formulas under a full
//! assignment. This is the reference semantics the solver is checked against.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use thiserror::Error;

use crate::formula::{Constraint, Formula, Kind, Term};
use crate::kernel::{self, KernelError};
use crate::value::Value;

pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("set pattern repeats an element of its tail")]
    TailOverlap,
    #[error("record pattern field `{0}` also occurs in its rest")]
    FieldOverlap(String),
}

impl EvalError {
    /// Errors that make a constraint false rather than unevaluable.
    pub fn is_semantic(&self) -> bool {
        !matches!(self, EvalError::Unbound(_))
    }
}

pub fn eval_term(t: &Term, env: &Env) -> Result<Value, EvalError> {
    match t {
        Term::Lit(v) => Ok(v.clone()),
        Term::Var(x) => env.get(x).cloned().ok_or_else(|| EvalError::Unbound(x.clone())),
        Term::Tuple(xs) => Ok(Value::Tuple(eval_all(xs, env)?)),
        Term::SeqExt(xs) => Ok(Value::Seq(eval_all(xs, env)?)),
        Term::Compound(f, xs) => Ok(Value::Compound(f.clone(), eval_all(xs, env)?)),
        Term::SetExt { elems, tail } => {
            let elems = eval_all(elems, env)?;
            let mut out: BTreeSet<Value> = match tail {
                Some(t) => kernel::expect_set(&eval_term(t, env)?)?.clone(),
                None => BTreeSet::new(),
            };
            for e in elems {
                if tail.is_some() && out.contains(&e) {
                    return Err(EvalError::TailOverlap);
                }
                out.insert(e);
            }
            Ok(Value::Set(out))
        }
        Term::Record { fields, rest } => {
            let mut out: BTreeSet<Value> = match rest {
                Some(t) => kernel::expect_set(&eval_term(t, env)?)?.clone(),
                None => BTreeSet::new(),
            };
            if rest.is_some() {
                let taken = kernel::dom(&Value::Set(out.clone()))?;
                for (f, _) in fields {
                    if kernel::member(&Value::Atom(f.clone()), &taken)? {
                        return Err(EvalError::FieldOverlap(f.name().to_string()));
                    }
                }
            }
            for (f, x) in fields {
                out.insert(Value::pair(Value::Atom(f.clone()), eval_term(x, env)?));
            }
            Ok(Value::Set(out))
        }
        Term::Ris(r) => {
            let domain = eval_term(&r.domain, env)?;
            let mut local = env.clone();
            kernel::ris_eval(
                &domain,
                |x| {
                    local.insert(r.binder.clone(), x.clone());
                    eval_formula(&r.filter, &local)
                },
                |x| {
                    let mut inner = env.clone();
                    inner.insert(r.binder.clone(), x.clone());
                    eval_term(&r.pattern, &inner)
                },
            )
        }
    }
}

fn eval_all(ts: &[Term], env: &Env) -> Result<Vec<Value>, EvalError> {
    ts.iter().map(|t| eval_term(t, env)).collect()
}

/// Evaluates one constraint. Type errors and undefined operations make it
/// false; unbound variables are reported as errors.
pub fn eval_constraint(c: &Constraint, env: &Env) -> Result<bool, EvalError> {
    let mut args = Vec::with_capacity(c.args.len());
    for a in &c.args {
        match eval_term(a, env) {
            Ok(v) => args.push(v),
            Err(e) if e.is_semantic() => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    match holds(c.kind, &args) {
        Ok(b) => Ok(b),
        Err(e) if e.is_semantic() => Ok(false),
        Err(e) => Err(e),
    }
}

/// Truth of a constraint kind on ground arguments.
pub fn holds(kind: Kind, a: &[Value]) -> Result<bool, EvalError> {
    Ok(match kind {
        Kind::Eq => a[0] == a[1],
        Kind::Neq => a[0] != a[1],
        Kind::In => kernel::member(&a[0], &a[1])?,
        Kind::Nin => !kernel::member(&a[0], &a[1])?,
        Kind::Disj => kernel::disjoint(&a[0], &a[1])?,
        Kind::Ndisj => !kernel::disjoint(&a[0], &a[1])?,
        Kind::Subset => kernel::subset(&a[0], &a[1])?,
        Kind::Nsubset => !kernel::subset(&a[0], &a[1])?,
        Kind::Pfun => kernel::is_pfun(&a[0])?,
        Kind::Npfun => !kernel::is_pfun(&a[0])?,
        Kind::Apply => {
            kernel::is_pfun(&a[0])?
                && kernel::member(&Value::pair(a[1].clone(), a[2].clone()), &a[0])?
        }
        Kind::Le => kernel::expect_int(&a[0])? <= kernel::expect_int(&a[1])?,
        Kind::Lt => kernel::expect_int(&a[0])? < kernel::expect_int(&a[1])?,
        k => {
            let (inputs, out) = a.split_at(a.len() - 1);
            compute(k, inputs)? == out[0]
        }
    })
}

/// Result of a functional kind on ground inputs (all arguments but the last).
pub fn compute(kind: Kind, a: &[Value]) -> Result<Value, EvalError> {
    let int = |v: &Value| kernel::expect_int(v).cloned();
    Ok(match kind {
        Kind::Un => kernel::union(&a[0], &a[1])?,
        Kind::Diff => kernel::difference(&a[0], &a[1])?,
        Kind::Inters => kernel::intersection(&a[0], &a[1])?,
        Kind::Dom => kernel::dom(&a[0])?,
        Kind::Ran => kernel::ran(&a[0])?,
        Kind::Oplus => kernel::override_rel(&a[0], &a[1])?,
        Kind::Dres => kernel::dres(&a[0], &a[1])?,
        Kind::Apply => {
            if !kernel::is_pfun(&a[0])? {
                return Err(KernelError::Ambiguous(a[1].clone()).into());
            }
            kernel::apply(&a[0], &a[1])?
        }
        Kind::SeqHead => kernel::seq_head(&a[0])?,
        Kind::SeqTail => kernel::seq_tail(&a[0])?,
        Kind::SeqConcat => kernel::seq_concat(&a[0], &a[1])?,
        Kind::SeqNth => kernel::seq_nth(&a[0], &int(&a[1])?)?,
        Kind::Size => Value::Int(BigInt::from(kernel::size(&a[0])?)),
        Kind::Plus => Value::Int(int(&a[0])? + int(&a[1])?),
        Kind::Minus => Value::Int(int(&a[0])? - int(&a[1])?),
        Kind::Times => Value::Int(int(&a[0])? * int(&a[1])?),
        Kind::IntDiv => Value::Int(kernel::int_div(&int(&a[0])?, &int(&a[1])?)?),
        k => unreachable!("{k} is not functional"),
    })
}

pub fn eval_conj(conj: &[Constraint], env: &Env) -> Result<bool, EvalError> {
    for c in conj {
        if !eval_constraint(c, env)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn eval_formula(f: &Formula, env: &Env) -> Result<bool, EvalError> {
    for clause in &f.clauses {
        if eval_conj(clause, env)? {
            return Ok(true);
        }
    }
    Ok(false)
}
