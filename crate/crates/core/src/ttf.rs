//! Test Template Framework: standard partitions of set operators, test
//! conditions built from them, and pruning by satisfiability.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{eval_formula, Env};
use crate::formula::{Constraint, Formula, Fresh, Kind, Term};
use crate::goals::{consensus_program, evm_program};
use crate::lang::{print_formula, print_term, print_value, Program};
use crate::solver::{Scope, SolveResult, Solver, Witness};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TtfError {
    #[error("no standard partition for `{0}` (supported: oplus, un, diff)")]
    Unsupported(String),
    #[error("unknown transition `{0}` (available: {1})")]
    UnknownTransition(String, String),
    #[error("transition `{transition}` has no {what}")]
    NoOccurrence { transition: String, what: String },
    #[error("`{kind}` occurs {count} times in `{transition}`; pick one with `{kind}#N` or use --all")]
    Ambiguous {
        transition: String,
        kind: String,
        count: usize,
    },
    #[error("bad occurrence selector `{0}`")]
    BadSelector(String),
    #[error("condition `{0}` is not satisfiable")]
    Infeasible(String),
    #[error("{0}")]
    Model(String),
}

/// Operators with a standard partition.
pub const PARTITIONED: [Kind; 3] = [Kind::Oplus, Kind::Un, Kind::Diff];

/// What one row of a partition says about its two operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fact {
    Empty(Side),
    NonEmpty(Side),
    Equal,
    /// The second operand is a strict subset of the first.
    SecondInFirst,
    Disjoint,
    /// The first operand is a strict subset of the second.
    FirstInSecond,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    First,
    Second,
}

const TABLE: [&[Fact]; 8] = {
    use Fact::*;
    use Side::*;
    [
        &[Empty(First), Empty(Second)],
        &[Empty(First), NonEmpty(Second)],
        &[NonEmpty(First), Empty(Second)],
        &[NonEmpty(First), NonEmpty(Second), Equal],
        &[NonEmpty(First), NonEmpty(Second), SecondInFirst],
        &[NonEmpty(First), NonEmpty(Second), Disjoint],
        &[NonEmpty(First), NonEmpty(Second), FirstInSecond],
        &[NonEmpty(First), NonEmpty(Second), Overlap],
    ]
};

/// One row of a standard partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCase {
    /// 1-based row number.
    pub index: usize,
    pub label: String,
    facts: &'static [Fact],
}

fn check_kind(op: Kind) -> Result<(), TtfError> {
    if PARTITIONED.contains(&op) {
        Ok(())
    } else {
        Err(TtfError::Unsupported(op.name().to_string()))
    }
}

/// Operand names used in labels: relations are compared by domain.
fn placeholders(op: Kind) -> (&'static str, &'static str, &'static str, &'static str) {
    match op {
        Kind::Oplus => ("R", "G", "dom R", "dom G"),
        _ => ("A", "B", "A", "B"),
    }
}

fn render(facts: &[Fact], first: &str, second: &str, dfirst: &str, dsecond: &str) -> String {
    facts
        .iter()
        .map(|f| match f {
            Fact::Empty(Side::First) => format!("{first} = ∅"),
            Fact::Empty(Side::Second) => format!("{second} = ∅"),
            Fact::NonEmpty(Side::First) => format!("{first} ≠ ∅"),
            Fact::NonEmpty(Side::Second) => format!("{second} ≠ ∅"),
            Fact::Equal => format!("{dfirst} = {dsecond}"),
            Fact::SecondInFirst => format!("{dsecond} ⊂ {dfirst}"),
            Fact::Disjoint => format!("{dfirst} ∩ {dsecond} = ∅"),
            Fact::FirstInSecond => format!("{dfirst} ⊂ {dsecond}"),
            Fact::Overlap => format!("{dfirst} ∩ {dsecond} ≠ ∅, ¬({dsecond} ⊆ {dfirst}), ¬({dfirst} ⊆ {dsecond})"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn standard_partition(op: Kind) -> Result<Vec<PartitionCase>, TtfError> {
    check_kind(op)?;
    let (r, g, dr, dg) = placeholders(op);
    Ok(TABLE
        .iter()
        .enumerate()
        .map(|(i, facts)| PartitionCase {
            index: i + 1,
            label: render(facts, r, g, dr, dg),
            facts,
        })
        .collect())
}

impl PartitionCase {
    /// The row as constraints over `first` and `second`, with fresh names
    /// for the operand domains when `op` compares relations.
    pub fn condition(&self, op: Kind, first: &Term, second: &Term, fresh: &mut Fresh) -> Formula {
        let mut cs = Vec::new();
        let needs_dom = self.facts.len() > 2;
        let (d1, d2) = if op == Kind::Oplus && needs_dom {
            let (d1, d2) = (Term::var(&fresh.next("_Dom")), Term::var(&fresh.next("_Dom")));
            cs.push(Constraint::new(Kind::Dom, vec![first.clone(), d1.clone()]));
            cs.push(Constraint::new(Kind::Dom, vec![second.clone(), d2.clone()]));
            (d1, d2)
        } else {
            (first.clone(), second.clone())
        };
        let empty = Term::empty_set();
        for f in self.facts {
            let side = |s: &Side| match s {
                Side::First => first.clone(),
                Side::Second => second.clone(),
            };
            match f {
                Fact::Empty(s) => cs.push(Constraint::eq(side(s), empty.clone())),
                Fact::NonEmpty(s) => cs.push(Constraint::neq(side(s), empty.clone())),
                Fact::Equal => cs.push(Constraint::eq(d1.clone(), d2.clone())),
                Fact::SecondInFirst => {
                    cs.push(Constraint::new(Kind::Subset, vec![d2.clone(), d1.clone()]));
                    cs.push(Constraint::neq(d2.clone(), d1.clone()));
                }
                Fact::Disjoint => cs.push(Constraint::new(Kind::Disj, vec![d1.clone(), d2.clone()])),
                Fact::FirstInSecond => {
                    cs.push(Constraint::new(Kind::Subset, vec![d1.clone(), d2.clone()]));
                    cs.push(Constraint::neq(d1.clone(), d2.clone()));
                }
                Fact::Overlap => {
                    cs.push(Constraint::new(Kind::Ndisj, vec![d1.clone(), d2.clone()]));
                    cs.push(Constraint::new(Kind::Nsubset, vec![d2.clone(), d1.clone()]));
                    cs.push(Constraint::new(Kind::Nsubset, vec![d1.clone(), d2.clone()]));
                }
            }
        }
        Formula::conj(cs)
    }

    /// Label with the operands named and the facts that the rest of the
    /// row or the operand syntax already implies left out.
    fn specialized(&self, op: Kind, first: &Term, second: &Term, names: &BTreeMap<String, String>) -> String {
        let nonempty_syntax = |t: &Term| matches!(t, Term::SetExt { elems, .. } if !elems.is_empty());
        let known = [nonempty_syntax(first), nonempty_syntax(second)];
        let implied = |s: Side| {
            let (me, other) = match s {
                Side::First => (0, 1),
                Side::Second => (1, 0),
            };
            known[me]
                || self.facts.iter().any(|f| match f {
                    Fact::Equal => known[other],
                    Fact::SecondInFirst => s == Side::First,
                    Fact::FirstInSecond => s == Side::Second,
                    Fact::Overlap => true,
                    _ => false,
                })
        };
        let facts: Vec<Fact> = self
            .facts
            .iter()
            .copied()
            .filter(|f| !matches!(f, Fact::NonEmpty(s) if implied(*s)))
            .collect();
        let (n1, n2) = (describe(first, names), describe(second, names));
        let (d1, d2) = if op == Kind::Oplus {
            (describe_dom(first, names), describe_dom(second, names))
        } else {
            (n1.clone(), n2.clone())
        };
        if facts.is_empty() {
            return "true".into();
        }
        render(&facts, &n1, &n2, &d1, &d2)
    }
}

fn describe(t: &Term, names: &BTreeMap<String, String>) -> String {
    match t {
        Term::Var(v) => names.get(v).cloned().unwrap_or_else(|| source_name(v).to_string()),
        Term::Lit(v) => print_value(v),
        Term::SetExt { elems, tail: None } => format!(
            "{{{}}}",
            elems.iter().map(|e| describe(e, names)).collect::<Vec<_>>().join(",")
        ),
        Term::Tuple(xs) => format!(
            "({})",
            xs.iter().map(|e| describe(e, names)).collect::<Vec<_>>().join(",")
        ),
        other => print_term(other),
    }
}

/// The name a clause local had before inlining appended `_k` to it.
fn source_name(v: &str) -> &str {
    match v.rsplit_once('_') {
        Some((base, k)) if !base.is_empty() && !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => v,
    }
}

fn describe_dom(t: &Term, names: &BTreeMap<String, String>) -> String {
    match t {
        Term::SetExt { elems, tail: None } if elems.iter().all(|e| matches!(e, Term::Tuple(xs) if xs.len() == 2)) => {
            let keys: Vec<String> = elems
                .iter()
                .map(|e| match e {
                    Term::Tuple(xs) => describe(&xs[0], names),
                    _ => unreachable!(),
                })
                .collect();
            format!("{{{}}}", keys.join(","))
        }
        other => format!("dom {}", describe(other, names)),
    }
}

/// A state transition: a formula over before-state, inputs and after-state.
#[derive(Debug, Clone)]
pub struct Transition {
    pub name: String,
    pub formula: Formula,
    /// Variables that make up a test fixture.
    pub inputs: Vec<String>,
}

pub const TRANSITION_NAMES: [&str; 2] = ["checkpoint_state", "rcv_addr"];

const CHECKPOINT_STATE: &str = "dec(S,world) & dec(T,transaction) & checkpointState(S,T,S_).";

const RCV_ADDR: &str = "
  dec(As,set(addr)) & dec(Asm,set(addr)) &
  S = {[as,As],[bf,{}],[tp,{}]} &
  P = [env,this,addrMsg(Asm)] &
  rcvAddr(S,P,Ps,S_).
";

impl Transition {
    pub fn from_program(name: &str, base: &Program, goal: &str, inputs: &[&str]) -> Result<Transition, TtfError> {
        let formula = Program::parse_with(goal, base)
            .and_then(|p| p.goal())
            .map_err(|e| TtfError::Model(e.to_string()))?;
        Ok(Transition {
            name: name.to_string(),
            formula,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn builtin(name: &str) -> Result<Transition, TtfError> {
        match name {
            "checkpoint_state" => Transition::from_program(name, &evm_program(), CHECKPOINT_STATE, &["S", "T"]),
            "rcv_addr" => Transition::from_program(name, &consensus_program(), RCV_ADDR, &["S", "P"]),
            other => Err(TtfError::UnknownTransition(other.to_string(), TRANSITION_NAMES.join(", "))),
        }
    }

    /// Display names for variables bound directly to record fields, so that
    /// `S = {[acc,Acc] / _}` names `Acc` after `acc`.
    pub fn field_names(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for c in self.formula.clauses.iter().flatten() {
            if c.kind != Kind::Eq {
                continue;
            }
            for t in &c.args {
                if let Term::Record { fields, .. } = t {
                    for (f, x) in fields {
                        if let Term::Var(v) = x {
                            out.entry(v.clone()).or_insert_with(|| f.name().to_string());
                        }
                    }
                }
            }
        }
        out
    }

    pub fn occurrences(&self) -> Vec<Occurrence> {
        let mut out = Vec::new();
        let mut seen: BTreeMap<Kind, usize> = BTreeMap::new();
        for (ci, clause) in self.formula.clauses.iter().enumerate() {
            for (k, c) in clause.iter().enumerate() {
                if PARTITIONED.contains(&c.kind) {
                    let n = seen.entry(c.kind).or_default();
                    *n += 1;
                    out.push(Occurrence {
                        transition: self.name.clone(),
                        clause: ci,
                        index: k,
                        nth: *n,
                        kind: c.kind,
                        first: c.args[0].clone(),
                        second: c.args[1].clone(),
                    });
                }
            }
        }
        out
    }

    /// Resolves `kind`, `kind#N` (1-based among that kind) or `all`.
    pub fn select(&self, selector: &str) -> Result<Vec<Occurrence>, TtfError> {
        let occs = self.occurrences();
        if selector == "all" {
            return Ok(occs);
        }
        let (kind, nth) = match selector.split_once('#') {
            Some((k, n)) => (k, Some(n.parse::<usize>().map_err(|_| TtfError::BadSelector(selector.into()))?)),
            None => (selector, None),
        };
        let kind = Kind::from_name(kind).ok_or_else(|| TtfError::BadSelector(selector.into()))?;
        check_kind(kind)?;
        let of_kind: Vec<Occurrence> = occs.into_iter().filter(|o| o.kind == kind).collect();
        let missing = || TtfError::NoOccurrence {
            transition: self.name.clone(),
            what: selector.to_string(),
        };
        match nth {
            Some(n) => of_kind.into_iter().find(|o| o.nth == n).map(|o| vec![o]).ok_or_else(missing),
            None if of_kind.is_empty() => Err(missing()),
            None if of_kind.len() > 1 => Err(TtfError::Ambiguous {
                transition: self.name.clone(),
                kind: kind.name().to_string(),
                count: of_kind.len(),
            }),
            None => Ok(of_kind),
        }
    }
}

/// One occurrence of a partitioned operator inside a transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    pub transition: String,
    pub clause: usize,
    /// Position of the constraint within its clause.
    pub index: usize,
    /// 1-based count among occurrences of the same operator.
    pub nth: usize,
    pub kind: Kind,
    pub first: Term,
    pub second: Term,
}

impl fmt::Display for Occurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}#{} {}({},{})",
            self.kind.name(),
            self.nth,
            self.kind.name(),
            print_term(&self.first),
            print_term(&self.second)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Pending,
    Satisfiable(Witness),
    Infeasible,
    Unknown(String),
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Satisfiable(_) => "satisfiable",
            Status::Infeasible => "infeasible",
            Status::Unknown(_) => "unknown",
        }
    }
}

/// The partition case chosen for one occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseChoice {
    pub occurrence: String,
    pub case: usize,
    pub label: String,
    pub specialized: String,
    pub condition: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCondition {
    pub transition: String,
    pub cases: Vec<CaseChoice>,
    /// The transition itself, shared by every condition derived from it.
    pub body: Formula,
    pub inputs: Vec<String>,
    pub status: Status,
}

impl TestCondition {
    /// Case constraints first, then the transition.
    pub fn formula(&self) -> Formula {
        let mut f = Formula::truth();
        for c in &self.cases {
            f = f.and(&c.condition);
        }
        let mut out = f.and(&self.body);
        out.sorts = self.body.sorts.clone();
        out.sorts.extend(f.sorts);
        out
    }

    pub fn label(&self) -> String {
        self.cases
            .iter()
            .map(|c| c.specialized.as_str())
            .collect::<Vec<_>>()
            .join(" ∧ ")
    }

    pub fn is_satisfiable(&self) -> bool {
        matches!(self.status, Status::Satisfiable(_))
    }

    pub fn text(&self) -> String {
        print_formula(&self.formula())
    }
}

/// One raw condition per case of the occurrence's standard partition.
pub fn instantiate(occ: &Occurrence, t: &Transition) -> Result<Vec<TestCondition>, TtfError> {
    let present = t
        .formula
        .clauses
        .get(occ.clause)
        .and_then(|c| c.get(occ.index))
        .is_some_and(|c| c.kind == occ.kind && c.args[0] == occ.first && c.args[1] == occ.second);
    if !present {
        return Err(TtfError::NoOccurrence {
            transition: t.name.clone(),
            what: occ.to_string(),
        });
    }
    let names = t.field_names();
    let mut fresh = Fresh::for_formula(&t.formula);
    Ok(standard_partition(occ.kind)?
        .into_iter()
        .map(|case| TestCondition {
            transition: t.name.clone(),
            cases: vec![CaseChoice {
                occurrence: format!("{}#{}", occ.kind.name(), occ.nth),
                case: case.index,
                label: case.label.clone(),
                specialized: case.specialized(occ.kind, &occ.first, &occ.second, &names),
                condition: case.condition(occ.kind, &occ.first, &occ.second, &mut fresh),
            }],
            body: t.formula.clone(),
            inputs: t.inputs.clone(),
            status: Status::Pending,
        })
        .collect())
}

/// Decides every condition, in parallel, keeping the input order. A
/// satisfiable verdict is only kept if its witness re-evaluates true.
pub fn prune(conds: Vec<TestCondition>, scope: &Scope) -> Vec<TestCondition> {
    let solver = Solver::new(scope.clone());
    conds
        .into_par_iter()
        .map(|mut c| {
            let f = c.formula();
            c.status = match solver.solve(&f) {
                SolveResult::Sat(w) => match eval_formula(&f, &w) {
                    Ok(true) => Status::Satisfiable(w),
                    Ok(false) => Status::Unknown("witness does not satisfy the condition".into()),
                    Err(e) => Status::Unknown(format!("witness does not evaluate: {e}")),
                },
                SolveResult::Unsat => Status::Infeasible,
                SolveResult::Unknown(r) => Status::Unknown(r),
            };
            c
        })
        .collect()
}

/// Cross product of per-occurrence conditions, pruned. Infeasible
/// combinations are dropped; undecided ones are kept.
pub fn combine(per_occurrence: Vec<Vec<TestCondition>>, scope: &Scope) -> Vec<TestCondition> {
    let mut acc: Vec<TestCondition> = Vec::new();
    for (i, list) in per_occurrence.into_iter().enumerate() {
        if i == 0 {
            acc = list;
            continue;
        }
        acc = acc
            .iter()
            .flat_map(|a| {
                list.iter().map(move |b| {
                    let mut c = a.clone();
                    c.cases.extend(b.cases.iter().cloned());
                    c.status = Status::Pending;
                    c
                })
            })
            .collect();
    }
    for c in &mut acc {
        c.status = Status::Pending;
    }
    prune(acc, scope)
        .into_iter()
        .filter(|c| c.status != Status::Infeasible)
        .collect()
}

/// Ground values for the transition's inputs, taken from the witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub name: String,
    pub bindings: BTreeMap<String, Value>,
}

impl TestCase {
    pub fn env(&self) -> Env {
        self.bindings.clone()
    }
}

pub fn derive_test_case(c: &TestCondition) -> Result<TestCase, TtfError> {
    let Status::Satisfiable(w) = &c.status else {
        return Err(TtfError::Infeasible(c.label()));
    };
    let keep: BTreeSet<&String> = c.inputs.iter().collect();
    let cases: Vec<String> = c.cases.iter().map(|k| format!("{}.{}", k.occurrence, k.case)).collect();
    Ok(TestCase {
        name: format!("{}:{}", c.transition, cases.join("+")),
        bindings: w
            .iter()
            .filter(|(k, _)| keep.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    })
}
