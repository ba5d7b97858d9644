//! Bounded satisfiability for constraint formulas.
//!
//! The search is a depth-first enumeration with propagation. Constraints
//! whose arguments are ground are evaluated directly; equalities are solved by
//! structural (record/set-extension aware) unification; functional
//! constraints compute their result once their inputs are known. Variables
//! are only enumerated when propagation stalls, and only over the values
//! their [`Sort`] allows inside a [`Scope`]. An `Unsat` answer is therefore
//! relative to the scope.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::eval::{self, Env};
use crate::formula::{negate, Constraint, Formula, Fresh, Kind, Sort, Term};
use crate::value::{Atom, Namespace, Value};

/// Finite bounds for enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize)]
pub struct Scope {
    pub atoms_per_namespace: usize,
    pub int_range: (i64, i64),
    pub max_set_card: usize,
    pub max_seq_len: usize,
}

impl Default for Scope {
    fn default() -> Self {
        Scope {
            atoms_per_namespace: 3,
            int_range: (0, 8),
            max_set_card: 3,
            max_seq_len: 4,
        }
    }
}

impl Scope {
    pub fn atoms(&self, ns: Namespace) -> Vec<Atom> {
        (1..=self.atoms_per_namespace)
            .map(|i| Atom::with_ns(format!("{}{i}", ns.atom_prefix()), ns))
            .collect()
    }

    pub fn ints(&self) -> impl Iterator<Item = BigInt> {
        (self.int_range.0..=self.int_range.1).map(BigInt::from)
    }

    fn int_count(&self) -> u128 {
        (self.int_range.1 - self.int_range.0 + 1).max(0) as u128
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "atoms={},ints={}..{},card={},seq={}",
            self.atoms_per_namespace,
            self.int_range.0,
            self.int_range.1,
            self.max_set_card,
            self.max_seq_len
        )
    }
}

impl FromStr for Scope {
    type Err = String;

    /// Parses `default` or a comma-separated list of `atoms=K`, `ints=LO..HI`,
    /// `card=C`, `seq=L`; omitted keys keep their default.
    fn from_str(s: &str) -> Result<Scope, String> {
        let mut scope = Scope::default();
        let s = s.trim();
        if s.is_empty() || s == "default" {
            return Ok(scope);
        }
        for part in s.split(',') {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| format!("scope entry `{part}` is not key=value"))?;
            let num = |v: &str| -> Result<i64, String> {
                v.trim().parse::<i64>().map_err(|_| format!("`{v}` is not an integer"))
            };
            let nat = |v: &str| -> Result<usize, String> {
                v.trim().parse::<usize>().map_err(|_| format!("`{v}` is not a natural number"))
            };
            match key.trim() {
                "atoms" => scope.atoms_per_namespace = nat(val)?,
                "card" => scope.max_set_card = nat(val)?,
                "seq" => scope.max_seq_len = nat(val)?,
                "ints" => {
                    let (lo, hi) = val
                        .split_once("..")
                        .ok_or_else(|| format!("ints range `{val}` must be LO..HI"))?;
                    let (lo, hi) = (num(lo)?, num(hi)?);
                    if lo > hi {
                        return Err(format!("empty ints range {lo}..{hi}"));
                    }
                    scope.int_range = (lo, hi);
                }
                other => return Err(format!("unknown scope key `{other}`")),
            }
        }
        Ok(scope)
    }
}

pub type Witness = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Sat(Witness),
    Unsat,
    Unknown(String),
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolveResult::Unsat)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            SolveResult::Sat(w) => Some(w),
            _ => None,
        }
    }
}

/// Outcome of an unsatisfiability check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Refutation {
    Unsat,
    Counterexample(Witness),
}

impl Refutation {
    pub fn is_unsat(&self) -> bool {
        matches!(self, Refutation::Unsat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proof {
    Verified,
    Counterexample(Witness),
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown: {0}")]
pub struct Undecided(pub String);

/// Search nodes explored before giving up.
pub const DEFAULT_BUDGET: u64 = 5_000_000;

/// Ground element domains up to this size are enumerated as literal sets.
const FLAT_LIMIT: u128 = 64;

#[derive(Debug, Clone)]
pub struct Solver {
    pub scope: Scope,
    pub budget: u64,
}

impl Solver {
    pub fn new(scope: Scope) -> Solver {
        Solver {
            scope,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Solver {
        self.budget = budget;
        self
    }

    pub fn solve(&self, f: &Formula) -> SolveResult {
        let vars = f.free_vars();
        let mut search = Search {
            scope: &self.scope,
            nodes: 0,
            budget: self.budget,
            fresh: Fresh::for_formula(f),
        };
        let mut unknown = None;
        for clause in &f.clauses {
            let state = State::new(clause, &f.sorts, &vars);
            match search.search(state) {
                Outcome::Sat(state) => match search.complete(&state, &vars, &f.sorts, clause) {
                    Ok(w) => return SolveResult::Sat(w),
                    Err(reason) => unknown = Some(reason),
                },
                Outcome::Unsat => {}
                Outcome::Unknown(reason) => {
                    unknown.get_or_insert(reason);
                }
            }
        }
        match unknown {
            Some(reason) => SolveResult::Unknown(reason),
            None => SolveResult::Unsat,
        }
    }

    pub fn check_unsat(&self, f: &Formula) -> Result<Refutation, Undecided> {
        match self.solve(f) {
            SolveResult::Unsat => Ok(Refutation::Unsat),
            SolveResult::Sat(w) => Ok(Refutation::Counterexample(w)),
            SolveResult::Unknown(r) => Err(Undecided(r)),
        }
    }

    /// Decides `hyp ⟹ concl` within the scope by refuting `hyp ∧ ¬concl`.
    pub fn prove_implication(&self, hyp: &Formula, concl: &Formula) -> Proof {
        let negated = match negate(concl) {
            Ok(n) => n,
            Err(e) => return Proof::Unknown(e.to_string()),
        };
        match self.check_unsat(&hyp.and(&negated)) {
            Ok(Refutation::Unsat) => Proof::Verified,
            Ok(Refutation::Counterexample(w)) => Proof::Counterexample(w),
            Err(Undecided(r)) => Proof::Unknown(r),
        }
    }
}

pub fn solve(f: &Formula, scope: &Scope) -> SolveResult {
    Solver::new(scope.clone()).solve(f)
}

pub fn check_unsat(f: &Formula, scope: &Scope) -> Result<Refutation, Undecided> {
    Solver::new(scope.clone()).check_unsat(f)
}

pub fn prove_implication(hyp: &Formula, concl: &Formula, scope: &Scope) -> Proof {
    Solver::new(scope.clone()).prove_implication(hyp, concl)
}

#[derive(Debug, Clone)]
struct State {
    subst: BTreeMap<String, Term>,
    sorts: BTreeMap<String, Sort>,
    pending: Vec<Constraint>,
    rank: HashMap<String, usize>,
}

impl State {
    fn new(clause: &[Constraint], sorts: &BTreeMap<String, Sort>, vars: &[String]) -> State {
        State {
            subst: BTreeMap::new(),
            sorts: sorts.clone(),
            pending: clause.to_vec(),
            rank: vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect(),
        }
    }

    fn walk(&self, t: &Term) -> Term {
        match t {
            Term::Lit(_) => t.clone(),
            Term::Var(x) => match self.subst.get(x) {
                Some(b) => self.walk(b),
                None => t.clone(),
            },
            Term::Tuple(xs) => Term::Tuple(xs.iter().map(|x| self.walk(x)).collect()),
            Term::SeqExt(xs) => Term::SeqExt(xs.iter().map(|x| self.walk(x)).collect()),
            Term::Compound(f, xs) => Term::Compound(f.clone(), xs.iter().map(|x| self.walk(x)).collect()),
            Term::SetExt { elems, tail } => Term::SetExt {
                elems: elems.iter().map(|x| self.walk(x)).collect(),
                tail: tail.as_ref().map(|x| Box::new(self.walk(x))),
            },
            Term::Record { fields, rest } => Term::Record {
                fields: fields.iter().map(|(f, x)| (f.clone(), self.walk(x))).collect(),
                rest: rest.as_ref().map(|x| Box::new(self.walk(x))),
            },
            Term::Ris(r) => {
                let mut inner = Vec::new();
                r.filter.free_vars_into(&mut inner);
                r.pattern.free_vars_into(&mut inner);
                let sub: BTreeMap<String, Term> = inner
                    .into_iter()
                    .filter(|v| *v != r.binder && self.subst.contains_key(v))
                    .map(|v| {
                        let t = self.walk(&Term::Var(v.clone()));
                        (v, t)
                    })
                    .collect();
                let mut ris = (**r).clone();
                ris.domain = self.walk(&r.domain);
                if !sub.is_empty() {
                    ris.filter = ris.filter.substitute(&sub);
                    ris.pattern = ris.pattern.substitute(&sub);
                }
                Term::Ris(Box::new(ris))
            }
        }
    }

    fn resolve(&self, t: &Term) -> Term {
        close(self.walk(t).normalize())
    }

    fn rank(&self, v: &str) -> usize {
        self.rank.get(v).copied().unwrap_or(usize::MAX)
    }
}

/// What must hold for the patterns inside `t` to denote a set: elements of
/// `{e.. / T}` are distinct and not in `T`, and fields of `{[f,x].. / R}` are
/// not keys of `R`.
fn pattern_conditions(t: &Term, fresh: &mut impl FnMut() -> String, out: &mut Vec<Constraint>) {
    match t {
        Term::Lit(_) | Term::Var(_) => {}
        Term::Tuple(xs) | Term::SeqExt(xs) | Term::Compound(_, xs) => {
            xs.iter().for_each(|x| pattern_conditions(x, fresh, out));
        }
        Term::SetExt { elems, tail } => {
            elems.iter().for_each(|x| pattern_conditions(x, fresh, out));
            if let Some(tail) = tail {
                pattern_conditions(tail, fresh, out);
                for (i, e) in elems.iter().enumerate() {
                    out.push(Constraint::new(Kind::Nin, vec![e.clone(), (**tail).clone()]));
                    for f in &elems[i + 1..] {
                        out.push(Constraint::neq(e.clone(), f.clone()));
                    }
                }
            }
        }
        Term::Record { fields, rest } => {
            fields.iter().for_each(|(_, x)| pattern_conditions(x, fresh, out));
            if let Some(rest) = rest {
                pattern_conditions(rest, fresh, out);
                let keys = Term::Var(fresh());
                out.push(Constraint::new(Kind::Dom, vec![(**rest).clone(), keys.clone()]));
                for (f, _) in fields {
                    out.push(Constraint::new(Kind::Nin, vec![Term::Lit(Value::Atom(f.clone())), keys.clone()]));
                }
            }
        }
        Term::Ris(r) => pattern_conditions(&r.domain, fresh, out),
    }
}

fn has_free_vars(t: &Term) -> bool {
    let mut vs = Vec::new();
    t.free_vars_into(&mut vs);
    !vs.is_empty()
}

/// Evaluates closed subterms (such as RIS terms over ground domains) to
/// literals where possible.
fn close(t: Term) -> Term {
    let t = match t {
        Term::Lit(_) | Term::Var(_) => return t,
        Term::Tuple(xs) => Term::Tuple(xs.into_iter().map(close).collect()),
        Term::SeqExt(xs) => Term::SeqExt(xs.into_iter().map(close).collect()),
        Term::Compound(f, xs) => Term::Compound(f, xs.into_iter().map(close).collect()),
        Term::SetExt { elems, tail } => Term::SetExt {
            elems: elems.into_iter().map(close).collect(),
            tail: tail.map(|x| Box::new(close(*x))),
        },
        Term::Record { fields, rest } => Term::Record {
            fields: fields.into_iter().map(|(f, x)| (f, close(x))).collect(),
            rest: rest.map(|x| Box::new(close(*x))),
        },
        Term::Ris(mut r) => {
            r.domain = close(r.domain);
            Term::Ris(r)
        }
    }
    .normalize();
    if !t.is_ground() && !has_free_vars(&t) {
        if let Ok(v) = eval::eval_term(&t, &Env::new()) {
            return Term::Lit(v);
        }
    }
    t
}

enum Outcome {
    Sat(State),
    Unsat,
    Unknown(String),
}

enum Step {
    Done,
    Fail,
    Blocked,
    Replace(Vec<Constraint>),
    Bind(String, Term),
    Branch(Vec<Vec<Constraint>>),
}

enum Prop {
    Stable,
    Fail,
    Branch(usize, Vec<Vec<Constraint>>),
}

struct Search<'a> {
    scope: &'a Scope,
    nodes: u64,
    budget: u64,
    fresh: Fresh,
}

impl Search<'_> {
    fn search(&mut self, mut state: State) -> Outcome {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Outcome::Unknown(format!(
                "search budget of {} nodes exhausted",
                self.budget
            ));
        }
        match self.propagate(&mut state) {
            Prop::Fail => Outcome::Unsat,
            Prop::Branch(idx, alts) => {
                state.pending.remove(idx);
                self.explore(alts.into_iter().map(|extra| {
                    let mut s = state.clone();
                    for (k, c) in extra.into_iter().enumerate() {
                        s.pending.insert(idx + k, c);
                    }
                    s
                }))
            }
            Prop::Stable if state.pending.is_empty() => Outcome::Sat(state),
            Prop::Stable => {
                let Some((var, sort)) = self.pick_variable(&state) else {
                    let residual = state
                        .pending
                        .iter()
                        .map(|c| format!("{}/{}", c.kind, c.args.len()))
                        .collect::<Vec<_>>()
                        .join(", ");
                    return Outcome::Unknown(format!(
                        "no enumerable variable left; residual constraints: {residual}"
                    ));
                };
                let alts = self.label(&var, &sort);
                self.explore(alts.into_iter().map(|(term, sorts, extra)| {
                    let mut s = state.clone();
                    s.sorts.extend(sorts);
                    s.subst.insert(var.clone(), term);
                    s.pending.extend(extra);
                    s
                }))
            }
        }
    }

    fn explore(&mut self, states: impl Iterator<Item = State>) -> Outcome {
        let mut unknown = None;
        for s in states {
            match self.search(s) {
                Outcome::Sat(s) => return Outcome::Sat(s),
                Outcome::Unsat => {}
                Outcome::Unknown(r) => {
                    if self.nodes > self.budget {
                        return Outcome::Unknown(r);
                    }
                    unknown.get_or_insert(r);
                }
            }
        }
        match unknown {
            Some(r) => Outcome::Unknown(r),
            None => Outcome::Unsat,
        }
    }

    fn propagate(&mut self, state: &mut State) -> Prop {
        loop {
            let mut progressed = false;
            let mut branch = None;
            let mut i = 0;
            while i < state.pending.len() {
                let c = Constraint {
                    kind: state.pending[i].kind,
                    args: state.pending[i].args.iter().map(|a| state.resolve(a)).collect(),
                };
                match self.process(&c) {
                    Step::Done => {
                        state.pending.remove(i);
                        progressed = true;
                    }
                    Step::Fail => return Prop::Fail,
                    Step::Blocked => {
                        state.pending[i] = c;
                        i += 1;
                    }
                    Step::Replace(cs) => {
                        state.pending.splice(i..=i, cs);
                        progressed = true;
                    }
                    Step::Bind(x, t) => {
                        if let Some(sort) = state.sorts.get(&x).cloned() {
                            assign_sorts(&t, &sort, &mut state.sorts);
                        }
                        let mut wf = Vec::new();
                        pattern_conditions(&t, &mut || self.fresh_var(), &mut wf);
                        state.subst.insert(x, t);
                        state.pending.remove(i);
                        state.pending.extend(wf);
                        progressed = true;
                    }
                    Step::Branch(alts) => {
                        if branch.is_none() {
                            branch = Some((i, alts));
                        }
                        state.pending[i] = c;
                        i += 1;
                    }
                }
            }
            if !progressed {
                return match branch {
                    Some((i, alts)) => Prop::Branch(i, alts),
                    None => Prop::Stable,
                };
            }
        }
    }

    fn fresh_var(&mut self) -> String {
        self.fresh.next("_V")
    }

    fn process(&mut self, c: &Constraint) -> Step {
        let a = &c.args;
        if a.iter().all(|t| !has_free_vars(t)) {
            return match eval::eval_constraint(c, &Env::new()) {
                Ok(true) => Step::Done,
                _ => Step::Fail,
            };
        }
        match c.kind {
            Kind::Eq => self.unify(&a[0], &a[1]),
            Kind::Neq => {
                if a[0] == a[1] {
                    Step::Fail
                } else if matches!(self.unify(&a[0], &a[1]), Step::Fail) {
                    Step::Done
                } else {
                    Step::Blocked
                }
            }
            Kind::In => membership(&a[0], &a[1]),
            Kind::Nin => match &a[1] {
                Term::SetExt { elems, tail } => {
                    let mut cs: Vec<Constraint> = elems
                        .iter()
                        .map(|e| Constraint::neq(a[0].clone(), e.clone()))
                        .collect();
                    if let Some(t) = tail {
                        cs.push(Constraint::new(Kind::Nin, vec![a[0].clone(), (**t).clone()]));
                    }
                    Step::Replace(cs)
                }
                Term::Lit(Value::Set(s)) if s.is_empty() => Step::Done,
                _ => Step::Blocked,
            },
            Kind::Pfun => match keyed(&a[0]) {
                Some(entries) => Step::Replace(same_key_equalities(&entries)),
                None => Step::Blocked,
            },
            Kind::Npfun => match keyed(&a[0]) {
                Some(entries) if distinct_keys(&entries) => Step::Fail,
                _ => Step::Blocked,
            },
            Kind::Subset if is_empty_lit(&a[0]) => Step::Done,
            Kind::Disj if is_empty_lit(&a[0]) || is_empty_lit(&a[1]) => Step::Done,
            Kind::Ndisj if is_empty_lit(&a[0]) || is_empty_lit(&a[1]) => Step::Fail,
            k if k.is_functional() => self.functional(k, a),
            _ => Step::Blocked,
        }
    }

    fn functional(&mut self, kind: Kind, a: &[Term]) -> Step {
        let (inputs, out) = a.split_at(a.len() - 1);
        let out = &out[0];
        if let Some(vals) = inputs.iter().map(|t| t.as_value().cloned()).collect::<Option<Vec<_>>>() {
            return match eval::compute(kind, &vals) {
                Ok(v) => Step::Replace(vec![Constraint::eq(out.clone(), Term::Lit(v))]),
                Err(_) => Step::Fail,
            };
        }
        let set_out = |t: Term| Step::Replace(vec![Constraint::eq(out.clone(), t)]);
        match kind {
            Kind::Un if is_empty_lit(&a[0]) => set_out(a[1].clone()),
            Kind::Un if is_empty_lit(&a[1]) => set_out(a[0].clone()),
            Kind::Diff if is_empty_lit(&a[1]) => set_out(a[0].clone()),
            Kind::Diff | Kind::Inters if is_empty_lit(&a[0]) => set_out(Term::empty_set()),
            Kind::Inters if is_empty_lit(&a[1]) => set_out(Term::empty_set()),
            Kind::Dom => match keyed(&a[0]) {
                Some(entries) => set_out(Term::Lit(Value::set(entries.into_iter().map(|(k, _)| k)))),
                None => Step::Blocked,
            },
            Kind::Oplus => match (keyed(&a[0]), keyed(&a[1])) {
                (Some(r), Some(g)) => {
                    let g_keys: BTreeSet<&Value> = g.iter().map(|(k, _)| k).collect();
                    let elems: Vec<Term> = r
                        .iter()
                        .filter(|(k, _)| !g_keys.contains(k))
                        .chain(g.iter())
                        .map(|(k, v)| Term::tuple(vec![Term::Lit(k.clone()), v.clone()]))
                        .collect();
                    set_out(Term::set_ext(elems, None))
                }
                _ => Step::Blocked,
            },
            Kind::Dres => match (a[0].as_value().and_then(Value::as_set), keyed(&a[1])) {
                (Some(d), Some(r)) => {
                    let elems: Vec<Term> = r
                        .into_iter()
                        .filter(|(k, _)| d.contains(k))
                        .map(|(k, v)| Term::tuple(vec![Term::Lit(k), v]))
                        .collect();
                    set_out(Term::set_ext(elems, None))
                }
                _ => Step::Blocked,
            },
            Kind::Apply => match (&a[1], keyed(&a[0])) {
                (Term::Lit(x), Some(entries)) => {
                    match entries.iter().find(|(k, _)| k == x) {
                        None => Step::Fail,
                        Some((_, v)) => Step::Replace(vec![
                            Constraint::new(Kind::Pfun, vec![a[0].clone()]),
                            Constraint::eq(out.clone(), v.clone()),
                        ]),
                    }
                }
                (_, _) => match a[0].as_value().and_then(Value::as_set) {
                    Some(f) => {
                        let mut alts = Vec::new();
                        for p in f {
                            if let Value::Tuple(xy) = p {
                                if xy.len() == 2 {
                                    alts.push(vec![
                                        Constraint::new(Kind::Pfun, vec![a[0].clone()]),
                                        Constraint::eq(a[1].clone(), Term::Lit(xy[0].clone())),
                                        Constraint::eq(out.clone(), Term::Lit(xy[1].clone())),
                                    ]);
                                }
                            }
                        }
                        Step::Branch(alts)
                    }
                    None => Step::Blocked,
                },
            },
            Kind::Size => match &a[0] {
                Term::SeqExt(xs) => set_out(Term::int(xs.len() as i64)),
                t => match keyed(t) {
                    Some(entries) if distinct_keys(&entries) => {
                        set_out(Term::int(entries.len() as i64))
                    }
                    _ => Step::Blocked,
                },
            },
            Kind::SeqHead => match seq_elems(&a[0]) {
                Some(xs) if xs.is_empty() => Step::Fail,
                Some(xs) => set_out(xs[0].clone()),
                None => Step::Blocked,
            },
            Kind::SeqTail => match seq_elems(&a[0]) {
                Some(xs) if xs.is_empty() => Step::Fail,
                Some(xs) => set_out(Term::SeqExt(xs[1..].to_vec()).normalize()),
                None => Step::Blocked,
            },
            Kind::SeqConcat => match (seq_elems(&a[0]), seq_elems(&a[1])) {
                (Some(mut xs), Some(ys)) => {
                    xs.extend(ys);
                    set_out(Term::SeqExt(xs).normalize())
                }
                _ => Step::Blocked,
            },
            Kind::SeqNth => match (seq_elems(&a[0]), a[1].as_value().and_then(Value::as_int)) {
                (Some(xs), Some(i)) => match i.to_usize() {
                    Some(i) if i >= 1 && i <= xs.len() => set_out(xs[i - 1].clone()),
                    _ => Step::Fail,
                },
                _ => Step::Blocked,
            },
            Kind::Plus | Kind::Minus => {
                let ints = |t: &Term| t.as_value().and_then(Value::as_int).cloned();
                let (x, y, z) = (ints(&a[0]), ints(&a[1]), ints(out));
                let bind = |t: &Term, v: BigInt| {
                    Step::Replace(vec![Constraint::eq(t.clone(), Term::Lit(Value::Int(v)))])
                };
                match (kind, x, y, z) {
                    (Kind::Plus, Some(x), None, Some(z)) => bind(&a[1], z - x),
                    (Kind::Plus, None, Some(y), Some(z)) => bind(&a[0], z - y),
                    (Kind::Minus, Some(x), None, Some(z)) => bind(&a[1], x - z),
                    (Kind::Minus, None, Some(y), Some(z)) => bind(&a[0], z + y),
                    _ => Step::Blocked,
                }
            }
            _ => Step::Blocked,
        }
    }

    fn unify(&mut self, a: &Term, b: &Term) -> Step {
        if a == b {
            return Step::Done;
        }
        match (a, b) {
            (Term::Var(x), t) | (t, Term::Var(x)) => {
                let mut vs = Vec::new();
                t.free_vars_into(&mut vs);
                if vs.contains(x) {
                    Step::Fail
                } else {
                    Step::Bind(x.clone(), t.clone())
                }
            }
            (Term::Lit(x), Term::Lit(y)) => {
                if x == y {
                    Step::Done
                } else {
                    Step::Fail
                }
            }
            _ => {
                let (sa, sb) = (shape(a), shape(b));
                if sa != sb {
                    return Step::Fail;
                }
                match sa {
                    Shape::Scalar => Step::Fail,
                    Shape::Tuple | Shape::Seq | Shape::Compound => match (components(a), components(b)) {
                        (Some((fa, xa)), Some((fb, xb))) => {
                            if fa != fb || xa.len() != xb.len() {
                                Step::Fail
                            } else {
                                Step::Replace(
                                    xa.into_iter().zip(xb).map(|(x, y)| Constraint::eq(x, y)).collect(),
                                )
                            }
                        }
                        _ => Step::Blocked,
                    },
                    Shape::Set => self.unify_sets(a, b),
                }
            }
        }
    }

    fn unify_sets(&mut self, a: &Term, b: &Term) -> Step {
        if let (Term::SetExt { .. }, Term::Record { .. }) | (Term::Record { .. }, Term::SetExt { .. }) = (a, b) {
            if let (Some(x), Some(y)) = (as_record(a), as_record(b)) {
                return self.unify_sets(&x, &y);
            }
        }
        match (a, b) {
            (Term::Record { fields, rest }, Term::Lit(v)) | (Term::Lit(v), Term::Record { fields, rest }) => {
                let Value::Set(s) = v else { return Step::Fail };
                let mut remaining = s.clone();
                let mut eqs = Vec::new();
                for (f, t) in fields {
                    let key = Value::Atom(f.clone());
                    let matches: Vec<&Value> = s
                        .iter()
                        .filter(|e| matches!(e, Value::Tuple(xy) if xy.len() == 2 && xy[0] == key))
                        .collect();
                    if matches.len() != 1 {
                        return Step::Fail;
                    }
                    let Value::Tuple(xy) = matches[0] else { unreachable!() };
                    eqs.push(Constraint::eq(t.clone(), Term::Lit(xy[1].clone())));
                    remaining.remove(matches[0]);
                }
                match rest {
                    None if !remaining.is_empty() => return Step::Fail,
                    None => {}
                    Some(r) => eqs.push(Constraint::eq((**r).clone(), Term::Lit(Value::Set(remaining)))),
                }
                Step::Replace(eqs)
            }
            (
                Term::Record {
                    fields: f1,
                    rest: r1,
                },
                Term::Record {
                    fields: f2,
                    rest: r2,
                },
            ) => {
                let m1: BTreeMap<&Atom, &Term> = f1.iter().map(|(f, t)| (f, t)).collect();
                let m2: BTreeMap<&Atom, &Term> = f2.iter().map(|(f, t)| (f, t)).collect();
                let mut eqs = Vec::new();
                let mut only1 = Vec::new();
                let mut only2 = Vec::new();
                let mut common = Vec::new();
                for (f, t) in &m1 {
                    match m2.get(f) {
                        Some(u) => {
                            eqs.push(Constraint::eq((*t).clone(), (*u).clone()));
                            common.push((*f).clone());
                        }
                        None => only1.push(((*f).clone(), (*t).clone())),
                    }
                }
                for (f, t) in &m2 {
                    if !m1.contains_key(f) {
                        only2.push(((*f).clone(), (*t).clone()));
                    }
                }
                let closed = |fields: Vec<(Atom, Term)>, rest: Option<Term>| {
                    Term::Record {
                        fields,
                        rest: rest.map(Box::new),
                    }
                    .normalize()
                };
                match (r1, r2) {
                    (None, None) => {
                        if !only1.is_empty() || !only2.is_empty() {
                            return Step::Fail;
                        }
                    }
                    (None, Some(r2)) => {
                        if !only2.is_empty() {
                            return Step::Fail;
                        }
                        eqs.push(Constraint::eq((**r2).clone(), closed(only1, None)));
                    }
                    (Some(r1), None) => {
                        if !only1.is_empty() {
                            return Step::Fail;
                        }
                        eqs.push(Constraint::eq((**r1).clone(), closed(only2, None)));
                    }
                    (Some(r1), Some(r2)) => {
                        if only1.is_empty() && only2.is_empty() {
                            eqs.push(Constraint::eq((**r1).clone(), (**r2).clone()));
                        } else {
                            let n = Term::Var(self.fresh_var());
                            let d = Term::Var(self.fresh_var());
                            eqs.push(Constraint::eq((**r1).clone(), closed(only2, Some(n.clone()))));
                            eqs.push(Constraint::eq((**r2).clone(), closed(only1, Some(n.clone()))));
                            if !common.is_empty() {
                                eqs.push(Constraint::new(Kind::Dom, vec![n, d.clone()]));
                                for f in common {
                                    eqs.push(Constraint::new(Kind::Nin, vec![Term::Lit(Value::Atom(f)), d.clone()]));
                                }
                            }
                        }
                    }
                }
                Step::Replace(eqs)
            }
            (Term::SetExt { elems, tail }, Term::Lit(Value::Set(s)))
            | (Term::Lit(Value::Set(s)), Term::SetExt { elems, tail }) => {
                if let Some(pos) = elems.iter().position(|e| !e.is_ground()) {
                    let this = Constraint::eq(
                        Term::SetExt {
                            elems: elems.clone(),
                            tail: tail.clone(),
                        },
                        Term::Lit(Value::Set(s.clone())),
                    );
                    return Step::Branch(
                        s.iter()
                            .map(|v| {
                                vec![
                                    Constraint::eq(elems[pos].clone(), Term::Lit(v.clone())),
                                    this.clone(),
                                ]
                            })
                            .collect(),
                    );
                }
                let mut remaining = s.clone();
                for e in elems {
                    let v = e.as_value().expect("ground element");
                    if !s.contains(v) {
                        return Step::Fail;
                    }
                    remaining.remove(v);
                }
                match tail {
                    None if remaining.is_empty() => Step::Done,
                    None => Step::Fail,
                    Some(t) => Step::Replace(vec![Constraint::eq((**t).clone(), Term::Lit(Value::Set(remaining)))]),
                }
            }
            (Term::Record { fields, rest: None }, other) | (other, Term::Record { fields, rest: None })
                if matches!(other, Term::SetExt { tail: None, .. }) =>
            {
                // A closed record against a closed extension: rewrite the
                // record as an extension of pairs and match element-wise.
                let as_ext = Term::SetExt {
                    elems: fields
                        .iter()
                        .map(|(f, t)| Term::Tuple(vec![Term::Lit(Value::Atom(f.clone())), t.clone()]).normalize())
                        .collect(),
                    tail: None,
                };
                match (keyed(&as_ext), keyed(other)) {
                    (Some(x), Some(y)) if distinct_keys(&x) && distinct_keys(&y) => {
                        if x.len() != y.len() || x.iter().zip(&y).any(|(p, q)| p.0 != q.0) {
                            return Step::Fail;
                        }
                        Step::Replace(
                            x.into_iter()
                                .zip(y)
                                .map(|(p, q)| Constraint::eq(p.1, q.1))
                                .collect(),
                        )
                    }
                    _ => Step::Blocked,
                }
            }
            (Term::SetExt { elems: e1, tail: None }, Term::SetExt { elems: e2, tail: None }) => {
                match (keyed(a), keyed(b)) {
                    (Some(x), Some(y)) if distinct_keys(&x) && distinct_keys(&y) => {
                        let kx: Vec<&Value> = x.iter().map(|p| &p.0).collect();
                        let ky: Vec<&Value> = y.iter().map(|p| &p.0).collect();
                        if kx != ky {
                            return Step::Fail;
                        }
                        Step::Replace(x.into_iter().zip(y).map(|(p, q)| Constraint::eq(p.1, q.1)).collect())
                    }
                    _ if e1.len() == 1 && e2.len() == 1 => {
                        Step::Replace(vec![Constraint::eq(e1[0].clone(), e2[0].clone())])
                    }
                    _ => Step::Blocked,
                }
            }
            _ => Step::Blocked,
        }
    }

    /// Picks the next variable to enumerate: structural expansions first, then
    /// the sorted variable with the smallest domain in the earliest pending
    /// constraint that has one.
    fn pick_variable(&self, state: &State) -> Option<(String, Sort)> {
        let mut structural: Option<(usize, String, Sort)> = None;
        let mut first: Option<(String, Sort)> = None;
        let mut unsorted: Vec<String> = Vec::new();
        for c in &state.pending {
            let mut vs = Vec::new();
            c.free_vars_into(&mut vs);
            let mut best: Option<(u128, usize, String, Sort)> = None;
            for v in vs {
                match state.sorts.get(&v) {
                    Some(s) => {
                        let est = self.estimate(s);
                        let rank = state.rank(&v);
                        if est <= 1 && structural.as_ref().is_none_or(|(r, n, _)| (rank, &v) < (*r, n)) {
                            structural = Some((rank, v.clone(), s.clone()));
                        }
                        if best.as_ref().is_none_or(|(e, r, n, _)| (est, rank, &v) < (*e, *r, n)) {
                            best = Some((est, rank, v, s.clone()));
                        }
                    }
                    None => {
                        if !unsorted.contains(&v) {
                            unsorted.push(v)
                        }
                    }
                }
            }
            if first.is_none() {
                if let Some((_, _, v, s)) = best {
                    first = Some((v, s));
                }
            }
        }
        if let Some((_, v, s)) = structural {
            return Some((v, s));
        }
        if first.is_some() {
            return first;
        }
        unsorted
            .into_iter()
            .find_map(|v| infer_sort(state, &v, self.scope).map(|s| (v, s)))
    }

    fn estimate(&self, s: &Sort) -> u128 {
        let sc = self.scope;
        match s {
            Sort::Int => sc.int_count(),
            Sort::Atoms(_) => sc.atoms_per_namespace as u128,
            Sort::Enum(xs) => xs.len() as u128,
            Sort::Tuple(_) | Sort::Record(_) | Sort::Ctor(..) => 1,
            Sort::Union(xs) => xs.len() as u128,
            Sort::Seq(_) => sc.max_seq_len as u128 + 1,
            Sort::Set(e) => match flat_size(e, sc) {
                Some(d) if d <= FLAT_LIMIT => subsets_upto(d, sc.max_set_card as u128),
                _ => match key_sort(e).and_then(|k| flat_size(k, sc)) {
                    Some(k) => multiset_count_upto(k, sc.max_set_card as u128),
                    None => sc.max_set_card as u128 + 1,
                },
            }
            .max(2),
        }
    }

    /// Alternatives for a variable: the term it is bound to, sorts for any
    /// fresh variables inside it, and extra constraints.
    fn label(&mut self, _var: &str, sort: &Sort) -> Vec<(Term, Vec<(String, Sort)>, Vec<Constraint>)> {
        let sc = self.scope;
        let lit = |v: Value| (Term::Lit(v), vec![], vec![]);
        match sort {
            Sort::Int => sc.ints().map(|n| lit(Value::Int(n))).collect(),
            Sort::Atoms(ns) => sc.atoms(*ns).into_iter().map(|a| lit(Value::Atom(a))).collect(),
            Sort::Enum(xs) => xs.iter().map(|a| lit(Value::Atom(a.clone()))).collect(),
            Sort::Tuple(ss) => {
                let (terms, sorts) = self.fresh_for(ss);
                vec![(Term::Tuple(terms).normalize(), sorts, vec![])]
            }
            Sort::Ctor(f, ss) => {
                let (terms, sorts) = self.fresh_for(ss);
                vec![(Term::Compound(f.clone(), terms).normalize(), sorts, vec![])]
            }
            Sort::Record(fs) => {
                let ss: Vec<Sort> = fs.iter().map(|(_, s)| s.clone()).collect();
                let (terms, sorts) = self.fresh_for(&ss);
                let fields = fs.iter().map(|(f, _)| f.clone()).zip(terms).collect();
                vec![(Term::Record { fields, rest: None }.normalize(), sorts, vec![])]
            }
            Sort::Union(ss) => ss
                .iter()
                .map(|s| {
                    let v = self.fresh_var();
                    (Term::Var(v.clone()), vec![(v, s.clone())], vec![])
                })
                .collect(),
            Sort::Seq(e) => (0..=sc.max_seq_len)
                .map(|n| {
                    let (terms, sorts) = self.fresh_for(&vec![(**e).clone(); n]);
                    (Term::SeqExt(terms).normalize(), sorts, vec![])
                })
                .collect(),
            Sort::Set(e) => self.label_set(e),
        }
    }

    fn label_set(&mut self, e: &Sort) -> Vec<(Term, Vec<(String, Sort)>, Vec<Constraint>)> {
        let sc = self.scope;
        let card = sc.max_set_card;
        if let Some(values) = flat_values(e, sc, FLAT_LIMIT) {
            return combinations_upto(values.len(), card)
                .into_iter()
                .map(|idx| (Term::Lit(Value::set(idx.into_iter().map(|i| values[i].clone()))), vec![], vec![]))
                .collect();
        }
        if let (Some(k), Some(Sort::Tuple(parts))) = (key_sort(e), Some(e)) {
            if let Some(keys) = flat_values(k, sc, FLAT_LIMIT) {
                let val_sorts: Vec<Sort> = parts[1..].to_vec();
                let mut out = Vec::new();
                for ms in multisets_upto(keys.len(), card) {
                    let mut elems = Vec::new();
                    let mut sorts = Vec::new();
                    let mut vals: Vec<Term> = Vec::new();
                    for &ki in &ms {
                        let (terms, ss) = self.fresh_for(&val_sorts);
                        sorts.extend(ss);
                        let mut tuple = vec![Term::Lit(keys[ki].clone())];
                        tuple.extend(terms.iter().cloned());
                        vals.push(Term::Tuple(terms).normalize());
                        elems.push(Term::Tuple(tuple).normalize());
                    }
                    let mut extra = Vec::new();
                    for i in 0..ms.len() {
                        for j in i + 1..ms.len() {
                            if ms[i] == ms[j] {
                                extra.push(Constraint::neq(vals[i].clone(), vals[j].clone()));
                            }
                        }
                    }
                    out.push((Term::SetExt { elems, tail: None }.normalize(), sorts, extra));
                }
                return out;
            }
        }
        (0..=card)
            .map(|n| {
                let (terms, sorts) = self.fresh_for(&vec![e.clone(); n]);
                let mut extra = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        extra.push(Constraint::neq(terms[i].clone(), terms[j].clone()));
                    }
                }
                (Term::SetExt { elems: terms, tail: None }.normalize(), sorts, extra)
            })
            .collect()
    }

    fn fresh_for(&mut self, sorts: &[Sort]) -> (Vec<Term>, Vec<(String, Sort)>) {
        let mut terms = Vec::new();
        let mut out = Vec::new();
        for s in sorts {
            let v = self.fresh_var();
            terms.push(Term::Var(v.clone()));
            out.push((v, s.clone()));
        }
        (terms, out)
    }

    /// Grounds every remaining variable of a satisfied state and re-checks
    /// the clause by direct evaluation.
    fn complete(
        &mut self,
        state: &State,
        vars: &[String],
        sorts: &BTreeMap<String, Sort>,
        clause: &[Constraint],
    ) -> Result<Witness, String> {
        let mut state = state.clone();
        for (k, v) in sorts {
            state.sorts.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let mut witness = Witness::new();
        for v in vars {
            let value = self.ground(&mut state, &Term::Var(v.clone()))?;
            witness.insert(v.clone(), value);
        }
        match eval::eval_conj(clause, &witness) {
            Ok(true) => Ok(witness),
            Ok(false) => Err("internal: witness failed re-evaluation".into()),
            Err(e) => Err(format!("internal: witness re-evaluation error: {e}")),
        }
    }

    fn ground(&mut self, state: &mut State, t: &Term) -> Result<Value, String> {
        for _ in 0..64 {
            let r = state.resolve(t);
            if let Term::Lit(v) = r {
                return Ok(v);
            }
            let mut vs = Vec::new();
            r.free_vars_into(&mut vs);
            if vs.is_empty() {
                return Err("internal: closed term does not evaluate".into());
            }
            for v in vs {
                let value = match state.sorts.get(&v) {
                    Some(s) => default_value(s, self.scope),
                    None => Value::empty_set(),
                };
                state.subst.insert(v, Term::Lit(value));
            }
        }
        Err("internal: grounding did not converge".into())
    }
}

/// Pushes a variable's sort down to the unsorted variables of the term it is
/// bound to.
fn assign_sorts(t: &Term, s: &Sort, sorts: &mut BTreeMap<String, Sort>) {
    match (t, s) {
        (Term::Var(v), s) => {
            sorts.entry(v.clone()).or_insert_with(|| s.clone());
        }
        (Term::Tuple(xs), Sort::Tuple(ss)) if xs.len() == ss.len() => {
            xs.iter().zip(ss).for_each(|(x, s)| assign_sorts(x, s, sorts))
        }
        (Term::Compound(f, xs), Sort::Ctor(g, ss)) if f == g && xs.len() == ss.len() => {
            xs.iter().zip(ss).for_each(|(x, s)| assign_sorts(x, s, sorts))
        }
        (Term::SeqExt(xs), Sort::Seq(e)) => xs.iter().for_each(|x| assign_sorts(x, e, sorts)),
        (Term::SetExt { elems, tail }, Sort::Set(e)) => {
            elems.iter().for_each(|x| assign_sorts(x, e, sorts));
            if let Some(t) = tail {
                assign_sorts(t, s, sorts);
            }
        }
        (Term::Record { fields, rest }, Sort::Record(fs)) => {
            for (f, x) in fields {
                if let Some((_, fs)) = fs.iter().find(|(g, _)| g == f) {
                    assign_sorts(x, fs, sorts);
                }
            }
            if let Some(r) = rest {
                let remaining = fs
                    .iter()
                    .filter(|(g, _)| !fields.iter().any(|(f, _)| f == g))
                    .cloned()
                    .collect();
                assign_sorts(r, &Sort::Record(remaining), sorts);
            }
        }
        _ => {}
    }
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Shape {
    Scalar,
    Tuple,
    Seq,
    Compound,
    Set,
}

fn shape(t: &Term) -> Shape {
    match t {
        Term::Lit(Value::Tuple(_)) | Term::Tuple(_) => Shape::Tuple,
        Term::Lit(Value::Seq(_)) | Term::SeqExt(_) => Shape::Seq,
        Term::Lit(Value::Compound(..)) | Term::Compound(..) => Shape::Compound,
        Term::Lit(Value::Set(_)) | Term::SetExt { .. } | Term::Record { .. } | Term::Ris(_) => Shape::Set,
        Term::Lit(Value::Atom(_)) | Term::Lit(Value::Int(_)) => Shape::Scalar,
        Term::Var(_) => unreachable!("variables are unified before shape dispatch"),
    }
}

fn components(t: &Term) -> Option<(Option<Atom>, Vec<Term>)> {
    let lits = |xs: &[Value]| xs.iter().cloned().map(Term::Lit).collect();
    match t {
        Term::Tuple(xs) | Term::SeqExt(xs) => Some((None, xs.clone())),
        Term::Compound(f, xs) => Some((Some(f.clone()), xs.clone())),
        Term::Lit(Value::Tuple(xs)) | Term::Lit(Value::Seq(xs)) => Some((None, lits(xs))),
        Term::Lit(Value::Compound(f, xs)) => Some((Some(f.clone()), lits(xs))),
        _ => None,
    }
}

fn seq_elems(t: &Term) -> Option<Vec<Term>> {
    match t {
        Term::SeqExt(xs) => Some(xs.clone()),
        Term::Lit(Value::Seq(xs)) => Some(xs.iter().cloned().map(Term::Lit).collect()),
        _ => None,
    }
}

fn is_empty_lit(t: &Term) -> bool {
    matches!(t, Term::Lit(Value::Set(s)) if s.is_empty())
}

/// Views a relation term whose pairs all have ground first components as a
/// list of `(key, value-term)` entries.
fn keyed(t: &Term) -> Option<Vec<(Value, Term)>> {
    match t {
        Term::Lit(Value::Set(s)) => s
            .iter()
            .map(|e| match e {
                Value::Tuple(xy) if xy.len() == 2 => Some((xy[0].clone(), Term::Lit(xy[1].clone()))),
                _ => None,
            })
            .collect(),
        Term::SetExt { elems, tail: None } => elems
            .iter()
            .map(|e| match e {
                Term::Lit(Value::Tuple(xy)) if xy.len() == 2 => {
                    Some((xy[0].clone(), Term::Lit(xy[1].clone())))
                }
                Term::Tuple(xy) if xy.len() == 2 => xy[0].as_value().map(|k| (k.clone(), xy[1].clone())),
                _ => None,
            })
            .collect(),
        Term::Record { fields, rest: None } => Some(
            fields
                .iter()
                .map(|(f, t)| (Value::Atom(f.clone()), t.clone()))
                .collect(),
        ),
        _ => None,
    }
}

/// A closed extension of atom-keyed pairs with distinct keys, seen as a record.
fn as_record(t: &Term) -> Option<Term> {
    match t {
        Term::Record { .. } => Some(t.clone()),
        Term::SetExt { tail: None, .. } => {
            let entries = keyed(t)?;
            if !distinct_keys(&entries) {
                return None;
            }
            let fields = entries
                .into_iter()
                .map(|(k, v)| Some((k.as_atom()?.clone(), v)))
                .collect::<Option<Vec<_>>>()?;
            Some(Term::Record { fields, rest: None }.normalize())
        }
        _ => None,
    }
}

fn distinct_keys(entries: &[(Value, Term)]) -> bool {
    let mut seen = BTreeSet::new();
    entries.iter().all(|(k, _)| seen.insert(k))
}

/// A relation is a partial function iff same-key entries carry equal values.
fn same_key_equalities(entries: &[(Value, Term)]) -> Vec<Constraint> {
    let mut first: BTreeMap<&Value, &Term> = BTreeMap::new();
    let mut out = Vec::new();
    for (k, v) in entries {
        match first.get(k) {
            Some(w) => out.push(Constraint::eq((*w).clone(), v.clone())),
            None => {
                first.insert(k, v);
            }
        }
    }
    out
}

fn membership(x: &Term, s: &Term) -> Step {
    match s {
        Term::Lit(Value::Set(set)) => Step::Branch(
            set.iter()
                .map(|v| vec![Constraint::eq(x.clone(), Term::Lit(v.clone()))])
                .collect(),
        ),
        Term::SetExt { elems, tail } => {
            if elems.iter().any(|e| e == x) {
                return Step::Done;
            }
            let mut alts: Vec<Vec<Constraint>> = elems
                .iter()
                .map(|e| vec![Constraint::eq(x.clone(), e.clone())])
                .collect();
            if let Some(t) = tail {
                alts.push(vec![Constraint::new(Kind::In, vec![x.clone(), (**t).clone()])]);
            }
            Step::Branch(alts)
        }
        _ => Step::Blocked,
    }
}

/// Infers a sort for an undeclared variable from set-typed neighbours.
/// Atoms in inferred sorts range over the scope plus every atom the pending
/// constraints mention.
fn infer_sort(state: &State, v: &str, sc: &Scope) -> Option<Sort> {
    let mut mentioned = BTreeSet::new();
    for c in &state.pending {
        c.args.iter().for_each(|t| term_atoms(t, &mut mentioned));
    }
    let sort_of = |t: &Term| -> Option<Sort> {
        match t {
            Term::Var(y) => state.sorts.get(y).cloned(),
            Term::Lit(x) => literal_sort(x, sc, &mentioned),
            _ => None,
        }
    };
    for c in &state.pending {
        let pos: Vec<usize> = c
            .args
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_var() == Some(v))
            .map(|(i, _)| i)
            .collect();
        if pos.is_empty() {
            continue;
        }
        match c.kind {
            Kind::Eq | Kind::Neq | Kind::Un | Kind::Diff | Kind::Inters | Kind::Subset | Kind::Nsubset
            | Kind::Disj | Kind::Ndisj => {
                let found: Vec<Sort> = c.args.iter().filter_map(sort_of).collect();
                let merged = found.iter().cloned().try_fold(None, |acc: Option<Sort>, s| match acc {
                    None => Some(Some(s)),
                    Some(prev) => merge_sorts(prev, s).map(Some),
                });
                match merged {
                    Some(Some(s)) => return Some(s),
                    _ => {
                        if let Some(s) = found.into_iter().next() {
                            return Some(s);
                        }
                    }
                }
            }
            Kind::In | Kind::Nin => {
                if pos.contains(&0) {
                    if let Some(Sort::Set(e)) = sort_of(&c.args[1]) {
                        return Some(*e);
                    }
                } else if let Some(e) = sort_of(&c.args[0]) {
                    return Some(Sort::Set(Box::new(e)));
                }
            }
            _ => {}
        }
    }
    None
}

/// Atoms occurring as data in a term (functors and field names excluded).
fn term_atoms(t: &Term, out: &mut BTreeSet<Atom>) {
    fn value_atoms(v: &Value, out: &mut BTreeSet<Atom>) {
        match v {
            Value::Atom(a) => {
                out.insert(a.clone());
            }
            Value::Int(_) => {}
            Value::Tuple(xs) | Value::Seq(xs) | Value::Compound(_, xs) => xs.iter().for_each(|x| value_atoms(x, out)),
            Value::Set(xs) => xs.iter().for_each(|x| value_atoms(x, out)),
        }
    }
    match t {
        Term::Lit(v) => value_atoms(v, out),
        Term::Var(_) => {}
        Term::Tuple(xs) | Term::Compound(_, xs) | Term::SeqExt(xs) => xs.iter().for_each(|x| term_atoms(x, out)),
        Term::SetExt { elems, tail } => {
            elems.iter().for_each(|x| term_atoms(x, out));
            tail.iter().for_each(|x| term_atoms(x, out));
        }
        Term::Record { fields, rest } => {
            fields.iter().for_each(|(_, x)| term_atoms(x, out));
            rest.iter().for_each(|x| term_atoms(x, out));
        }
        Term::Ris(r) => {
            term_atoms(&r.domain, out);
            term_atoms(&r.pattern, out);
        }
    }
}

/// A sort containing a literal. Atoms range over the scope's atoms and the
/// mentioned atoms of the same namespace.
fn literal_sort(v: &Value, sc: &Scope, mentioned: &BTreeSet<Atom>) -> Option<Sort> {
    let rec = |x: &Value| literal_sort(x, sc, mentioned);
    match v {
        Value::Int(_) => Some(Sort::Int),
        Value::Atom(a) => {
            let mut xs: BTreeSet<Atom> = sc.atoms(a.namespace()).into_iter().collect();
            xs.extend(mentioned.iter().filter(|m| m.namespace() == a.namespace()).cloned());
            xs.insert(a.clone());
            Some(Sort::Enum(xs.into_iter().collect()))
        }
        Value::Tuple(xs) => Some(Sort::Tuple(xs.iter().map(rec).collect::<Option<_>>()?)),
        Value::Compound(f, xs) => Some(Sort::Ctor(f.clone(), xs.iter().map(rec).collect::<Option<_>>()?)),
        Value::Set(xs) => Some(Sort::Set(Box::new(merged_sort(xs.iter(), sc, mentioned)?))),
        Value::Seq(xs) => Some(Sort::Seq(Box::new(merged_sort(xs.iter(), sc, mentioned)?))),
    }
}

fn merged_sort<'a>(xs: impl Iterator<Item = &'a Value>, sc: &Scope, mentioned: &BTreeSet<Atom>) -> Option<Sort> {
    let mut acc: Option<Sort> = None;
    for x in xs {
        let s = literal_sort(x, sc, mentioned)?;
        acc = Some(match acc {
            None => s,
            Some(prev) => merge_sorts(prev, s)?,
        });
    }
    acc
}

fn merge_sorts(a: Sort, b: Sort) -> Option<Sort> {
    match (a, b) {
        (Sort::Enum(x), Sort::Enum(y)) => {
            let all: BTreeSet<Atom> = x.into_iter().chain(y).collect();
            Some(Sort::Enum(all.into_iter().collect()))
        }
        (Sort::Tuple(x), Sort::Tuple(y)) if x.len() == y.len() => Some(Sort::Tuple(
            x.into_iter().zip(y).map(|(p, q)| merge_sorts(p, q)).collect::<Option<_>>()?,
        )),
        (Sort::Set(x), Sort::Set(y)) => Some(Sort::Set(Box::new(merge_sorts(*x, *y)?))),
        (Sort::Seq(x), Sort::Seq(y)) => Some(Sort::Seq(Box::new(merge_sorts(*x, *y)?))),
        (Sort::Ctor(f, x), Sort::Ctor(g, y)) if f == g && x.len() == y.len() => Some(Sort::Ctor(
            f,
            x.into_iter().zip(y).map(|(p, q)| merge_sorts(p, q)).collect::<Option<_>>()?,
        )),
        (x, y) if x == y => Some(x),
        _ => None,
    }
}

fn key_sort(e: &Sort) -> Option<&Sort> {
    match e {
        Sort::Tuple(parts) if parts.len() >= 2 => Some(&parts[0]),
        _ => None,
    }
}

/// Number of values of a sort, if finite under the scope and representable.
pub fn flat_size(s: &Sort, sc: &Scope) -> Option<u128> {
    match s {
        Sort::Int => Some(sc.int_count()),
        Sort::Atoms(_) => Some(sc.atoms_per_namespace as u128),
        Sort::Enum(xs) => Some(xs.len() as u128),
        Sort::Tuple(ss) | Sort::Ctor(_, ss) => ss.iter().try_fold(1u128, |acc, s| acc.checked_mul(flat_size(s, sc)?)),
        Sort::Record(fs) => fs.iter().try_fold(1u128, |acc, (_, s)| acc.checked_mul(flat_size(s, sc)?)),
        Sort::Union(ss) => ss.iter().try_fold(0u128, |acc, s| acc.checked_add(flat_size(s, sc)?)),
        Sort::Set(e) => {
            let d = flat_size(e, sc)?;
            if d > 1 << 20 {
                return None;
            }
            Some(subsets_upto(d, sc.max_set_card as u128))
        }
        Sort::Seq(e) => {
            let d = flat_size(e, sc)?;
            (0..=sc.max_seq_len as u32).try_fold(0u128, |acc, l| acc.checked_add(d.checked_pow(l)?))
        }
    }
}

/// All values of a sort in enumeration order, when there are at most `limit`.
pub fn flat_values(s: &Sort, sc: &Scope, limit: u128) -> Option<Vec<Value>> {
    if flat_size(s, sc)? > limit {
        return None;
    }
    Some(all_values(s, sc))
}

fn all_values(s: &Sort, sc: &Scope) -> Vec<Value> {
    let product = |ss: &[Sort]| -> Vec<Vec<Value>> {
        let mut acc: Vec<Vec<Value>> = vec![vec![]];
        for s in ss {
            let vs = all_values(s, sc);
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    vs.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        acc
    };
    match s {
        Sort::Int => sc.ints().map(Value::Int).collect(),
        Sort::Atoms(ns) => sc.atoms(*ns).into_iter().map(Value::Atom).collect(),
        Sort::Enum(xs) => xs.iter().cloned().map(Value::Atom).collect(),
        Sort::Tuple(ss) => product(ss).into_iter().map(Value::Tuple).collect(),
        Sort::Ctor(f, ss) => product(ss)
            .into_iter()
            .map(|xs| Value::Compound(f.clone(), xs))
            .collect(),
        Sort::Record(fs) => {
            let ss: Vec<Sort> = fs.iter().map(|(_, s)| s.clone()).collect();
            product(&ss)
                .into_iter()
                .map(|xs| {
                    Value::set(
                        fs.iter()
                            .zip(xs)
                            .map(|((f, _), x)| Value::pair(Value::Atom(f.clone()), x)),
                    )
                })
                .collect()
        }
        Sort::Union(ss) => ss.iter().flat_map(|s| all_values(s, sc)).collect(),
        Sort::Set(e) => {
            let vs = all_values(e, sc);
            combinations_upto(vs.len(), sc.max_set_card)
                .into_iter()
                .map(|idx| Value::set(idx.into_iter().map(|i| vs[i].clone())))
                .collect()
        }
        Sort::Seq(e) => (0..=sc.max_seq_len)
            .flat_map(|n| product(&vec![(**e).clone(); n]))
            .map(Value::Seq)
            .collect(),
    }
}

/// First value of a sort in enumeration order.
pub fn default_value(s: &Sort, sc: &Scope) -> Value {
    match s {
        Sort::Int => Value::Int(BigInt::from(sc.int_range.0)),
        Sort::Atoms(ns) => sc
            .atoms(*ns)
            .into_iter()
            .next()
            .map(Value::Atom)
            .unwrap_or_else(|| Value::Atom(Atom::with_ns(format!("{}1", ns.atom_prefix()), *ns))),
        Sort::Enum(xs) => xs.first().cloned().map(Value::Atom).unwrap_or_else(Value::empty_set),
        Sort::Tuple(ss) => Value::Tuple(ss.iter().map(|s| default_value(s, sc)).collect()),
        Sort::Ctor(f, ss) => Value::Compound(f.clone(), ss.iter().map(|s| default_value(s, sc)).collect()),
        Sort::Record(fs) => Value::set(
            fs.iter()
                .map(|(f, s)| Value::pair(Value::Atom(f.clone()), default_value(s, sc))),
        ),
        Sort::Union(ss) => ss.first().map(|s| default_value(s, sc)).unwrap_or_else(Value::empty_set),
        Sort::Set(_) => Value::empty_set(),
        Sort::Seq(_) => Value::Seq(vec![]),
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn subsets_upto(n: u128, card: u128) -> u128 {
    (0..=card.min(n)).map(|k| binomial(n, k)).fold(0u128, u128::saturating_add)
}

fn multiset_count_upto(n: u128, card: u128) -> u128 {
    (0..=card)
        .map(|k| if n == 0 { u128::from(k == 0) } else { binomial(n + k - 1, k) })
        .fold(0u128, u128::saturating_add)
}

/// Index combinations of size `0..=card`, by size then lexicographically.
fn combinations_upto(n: usize, card: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for k in 0..=card.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let mut i = k;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if idx[i] != i + n - k {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX || k == 0 {
                break;
            }
        }
    }
    out
}

/// Non-decreasing index sequences of length `0..=card`.
fn multisets_upto(n: usize, card: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, len: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(n, len, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for len in 0..=card {
        go(n, len, 0, &mut Vec::new(), &mut out);
    }
    out
}
