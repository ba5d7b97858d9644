//! Ethereum fragment: the checkpoint step of a transaction and the two
//! outcomes of the `create` instruction.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::kernel::{self, KernelError};
use crate::lang::{self, print_value};
use crate::value::{Atom, Namespace, Value};

/// Bound on nested create calls.
pub const MAX_CREATE_DEPTH: u32 = 1024;
pub const WORD_BYTES: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvmError {
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("not enabled: {0}")]
    NotEnabled(String),
    #[error("stack underflow: need {need} words, have {have}")]
    StackUnderflow { need: usize, have: usize },
    #[error("balance {bal} cannot cover {cost}")]
    Underflow { bal: BigInt, cost: BigInt },
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("malformed {what}: {text}")]
    Malformed { what: &'static str, text: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

type Result<T> = std::result::Result<T, EvmError>;

fn malformed(what: &'static str, text: impl Into<String>) -> EvmError {
    EvmError::Malformed {
        what,
        text: text.into(),
    }
}

fn field(v: &Value, name: &str, what: &'static str) -> Result<Value> {
    kernel::record_get(v, &Atom::new(name)).map_err(|_| malformed(what, format!("missing field `{name}` in {}", print_value(v))))
}

fn nat(v: &Value, what: &'static str) -> Result<BigInt> {
    match v.as_int() {
        Some(n) if !n.is_negative() => Ok(n.clone()),
        _ => Err(malformed(what, format!("expected a non-negative integer, found {}", print_value(v)))),
    }
}

fn nat_field(v: &Value, name: &str, what: &'static str) -> Result<BigInt> {
    nat(&field(v, name, what)?, what)
}

fn addr_of(v: &Value, what: &'static str) -> Result<Atom> {
    v.as_atom()
        .map(|a| a.tagged(Namespace::Addr))
        .ok_or_else(|| malformed(what, format!("expected an address, found {}", print_value(v))))
}

fn int(n: &BigInt) -> Value {
    Value::Int(n.clone())
}

fn parse(text: &str, what: &'static str) -> Result<Value> {
    lang::parse_value(text).map_err(|e| malformed(what, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Acc {
    pub nonce: BigInt,
    pub bal: BigInt,
    /// Opaque program.
    pub code: Value,
}

impl Acc {
    pub fn new(nonce: impl Into<BigInt>, bal: impl Into<BigInt>, code: Value) -> Result<Acc> {
        let (nonce, bal) = (nonce.into(), bal.into());
        if nonce.is_negative() || bal.is_negative() {
            return Err(EvmError::Invariant("account nonce and balance are non-negative".into()));
        }
        Ok(Acc { nonce, bal, code })
    }

    pub fn to_value(&self) -> Value {
        Value::record([
            ("nonce", int(&self.nonce)),
            ("bal", int(&self.bal)),
            ("code", self.code.clone()),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Acc> {
        Ok(Acc {
            nonce: nat_field(v, "nonce", "account")?,
            bal: nat_field(v, "bal", "account")?,
            code: field(v, "code", "account")?,
        })
    }
}

fn accounts_value(m: &BTreeMap<Atom, Acc>) -> Value {
    Value::set(m.iter().map(|(a, acc)| Value::pair(Value::Atom(a.clone()), acc.to_value())))
}

fn accounts_from(v: &Value) -> Result<BTreeMap<Atom, Acc>> {
    if !kernel::is_pfun(v)? {
        return Err(EvmError::Invariant("account map is not a partial function".into()));
    }
    kernel::pairs(v)?
        .into_iter()
        .map(|(a, acc)| Ok((addr_of(a, "account map")?, Acc::from_value(acc)?)))
        .collect()
}

/// Execution phase of the current transaction. Open ended: phases past the
/// checkpoint are carried by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Initial,
    CcBegins,
    Other(String),
}

impl Step {
    pub fn name(&self) -> &str {
        match self {
            Step::Initial => "initial",
            Step::CcBegins => "ccbegins",
            Step::Other(s) => s,
        }
    }

    pub fn from_name(s: &str) -> Step {
        match s {
            "initial" => Step::Initial,
            "ccbegins" => Step::CcBegins,
            other => Step::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub acc: BTreeMap<Atom, Acc>,
    pub acc_cc: BTreeMap<Atom, Acc>,
    pub newaddr: Atom,
    pub step: Step,
}

impl World {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("acc", accounts_value(&self.acc)),
            ("accCC", accounts_value(&self.acc_cc)),
            ("newaddr", Value::Atom(self.newaddr.clone())),
            ("step", Value::atom(self.step.name())),
        ])
    }

    pub fn from_value(v: &Value) -> Result<World> {
        let step = field(v, "step", "world")?;
        let step = step
            .as_atom()
            .ok_or_else(|| malformed("world", "step must be an atom"))?;
        Ok(World {
            acc: accounts_from(&field(v, "acc", "world")?)?,
            acc_cc: accounts_from(&field(v, "accCC", "world")?)?,
            newaddr: addr_of(&field(v, "newaddr", "world")?, "world")?,
            step: Step::from_name(step.name()),
        })
    }

    pub fn parse(text: &str) -> Result<World> {
        World::from_value(&parse(text, "world")?)
    }

    fn account(&self, a: &Atom) -> Result<&Acc> {
        self.acc
            .get(a)
            .ok_or_else(|| EvmError::UnknownAccount(a.name().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxType {
    ContractCreation,
    MessageCall,
}

impl TxType {
    pub fn name(self) -> &'static str {
        match self {
            TxType::ContractCreation => "contractCreation",
            TxType::MessageCall => "messageCall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tn: BigInt,
    pub tg: BigInt,
    pub tp: BigInt,
    pub tv: BigInt,
    pub ti: Value,
    pub td: Vec<BigInt>,
    pub sender: Atom,
    pub tt: TxType,
}

impl Transaction {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("tn", int(&self.tn)),
            ("tg", int(&self.tg)),
            ("tp", int(&self.tp)),
            ("tv", int(&self.tv)),
            ("ti", self.ti.clone()),
            ("td", Value::seq(self.td.iter().map(int))),
            ("sender", Value::Atom(self.sender.clone())),
            ("tt", Value::atom(self.tt.name())),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Transaction> {
        const W: &str = "transaction";
        let td = field(v, "td", W)?;
        let td = kernel::expect_seq(&td)
            .map_err(|_| malformed(W, "td must be a sequence"))?
            .iter()
            .map(|b| nat(b, W))
            .collect::<Result<_>>()?;
        let tt = match field(v, "tt", W)?.as_atom().map(Atom::name) {
            Some("contractCreation") => TxType::ContractCreation,
            Some("messageCall") => TxType::MessageCall,
            _ => return Err(malformed(W, "tt must be contractCreation or messageCall")),
        };
        Ok(Transaction {
            tn: nat_field(v, "tn", W)?,
            tg: nat_field(v, "tg", W)?,
            tp: nat_field(v, "tp", W)?,
            tv: nat_field(v, "tv", W)?,
            ti: field(v, "ti", W)?,
            td,
            sender: addr_of(&field(v, "sender", W)?, W)?,
            tt,
        })
    }

    pub fn parse(text: &str) -> Result<Transaction> {
        Transaction::from_value(&parse(text, "transaction")?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub g: BigInt,
    pub pc: BigInt,
    /// Memory: byte address to byte.
    pub m: BTreeMap<BigInt, BigInt>,
    /// Active memory words.
    pub i: BigInt,
    /// Stack, top first. Words are integers or addresses pushed by `create`.
    pub s: Vec<Value>,
    pub out: Vec<BigInt>,
}

impl Machine {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("g", int(&self.g)),
            ("pc", int(&self.pc)),
            ("m", self.memory_value()),
            ("i", int(&self.i)),
            ("s", Value::Seq(self.s.clone())),
            ("out", Value::seq(self.out.iter().map(int))),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Machine> {
        const W: &str = "machine";
        let m = field(v, "m", W)?;
        if !kernel::is_pfun(&m)? {
            return Err(EvmError::Invariant("memory is not a partial function".into()));
        }
        let m = kernel::pairs(&m)?
            .into_iter()
            .map(|(a, b)| {
                let b = nat(b, W)?;
                if b > BigInt::from(255) {
                    return Err(malformed(W, format!("byte {b} out of range")));
                }
                Ok((nat(a, W)?, b))
            })
            .collect::<Result<_>>()?;
        let s = field(v, "s", W)?;
        let out = field(v, "out", W)?;
        Ok(Machine {
            g: nat_field(v, "g", W)?,
            pc: nat_field(v, "pc", W)?,
            m,
            i: nat_field(v, "i", W)?,
            s: kernel::expect_seq(&s).map_err(|_| malformed(W, "s must be a sequence"))?.to_vec(),
            out: kernel::expect_seq(&out)
                .map_err(|_| malformed(W, "out must be a sequence"))?
                .iter()
                .map(|b| nat(b, W))
                .collect::<Result<_>>()?,
        })
    }

    pub fn parse(text: &str) -> Result<Machine> {
        Machine::from_value(&parse(text, "machine")?)
    }

    pub fn memory_value(&self) -> Value {
        Value::set(self.m.iter().map(|(a, b)| Value::pair(int(a), int(b))))
    }

    fn require(&self, n: usize) -> Result<()> {
        if self.s.len() < n {
            return Err(EvmError::StackUnderflow {
                need: n,
                have: self.s.len(),
            });
        }
        Ok(())
    }

    /// 1-based stack word as an integer.
    fn word(&self, k: usize) -> Result<BigInt> {
        self.require(k)?;
        nat(&self.s[k - 1], "stack word")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecEnv {
    /// Owner of the executing code.
    pub ia: Atom,
    /// Original transactor.
    pub io: Atom,
    pub ip: BigInt,
    /// Create depth.
    pub ie: BigInt,
}

impl ExecEnv {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("ia", Value::Atom(self.ia.clone())),
            ("io", Value::Atom(self.io.clone())),
            ("ip", int(&self.ip)),
            ("ie", int(&self.ie)),
        ])
    }

    pub fn from_value(v: &Value) -> Result<ExecEnv> {
        const W: &str = "execution environment";
        Ok(ExecEnv {
            ia: addr_of(&field(v, "ia", W)?, W)?,
            io: addr_of(&field(v, "io", W)?, W)?,
            ip: nat_field(v, "ip", W)?,
            ie: nat_field(v, "ie", W)?,
        })
    }
}

/// `[code, pc]` where `pc` is a 0-based offset into `code`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub code: Vec<Atom>,
    pub pc: usize,
}

impl Frame {
    pub fn current(&self) -> Option<&Atom> {
        self.code.get(self.pc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CallStack {
    pub cs: Vec<Frame>,
    pub ees: Vec<ExecEnv>,
}

impl CallStack {
    pub fn to_value(&self) -> Value {
        Value::record([
            (
                "cs",
                Value::seq(self.cs.iter().map(|f| {
                    Value::Tuple(vec![
                        Value::seq(f.code.iter().cloned().map(Value::Atom)),
                        Value::int(f.pc as u64),
                    ])
                })),
            ),
            ("ees", Value::seq(self.ees.iter().map(ExecEnv::to_value))),
        ])
    }

    pub fn from_value(v: &Value) -> Result<CallStack> {
        const W: &str = "call stack";
        let cs = field(v, "cs", W)?;
        let ees = field(v, "ees", W)?;
        let frame = |f: &Value| -> Result<Frame> {
            let Value::Tuple(xs) = f else {
                return Err(malformed(W, "a frame is [code, pc]"));
            };
            let [code, pc] = xs.as_slice() else {
                return Err(malformed(W, "a frame is [code, pc]"));
            };
            let code = kernel::expect_seq(code)
                .map_err(|_| malformed(W, "frame code must be a sequence"))?
                .iter()
                .map(|i| i.as_atom().cloned().ok_or_else(|| malformed(W, "instructions are atoms")))
                .collect::<Result<_>>()?;
            let pc = nat(pc, W)?.to_usize().ok_or_else(|| malformed(W, "pc too large"))?;
            Ok(Frame { code, pc })
        };
        let k = CallStack {
            cs: kernel::expect_seq(&cs).map_err(|_| malformed(W, "cs must be a sequence"))?.iter().map(frame).collect::<Result<_>>()?,
            ees: kernel::expect_seq(&ees)
                .map_err(|_| malformed(W, "ees must be a sequence"))?
                .iter()
                .map(ExecEnv::from_value)
                .collect::<Result<_>>()?,
        };
        if !k.cs.is_empty() && !k.ees.is_empty() && k.cs.len() != k.ees.len() {
            return Err(EvmError::Invariant("frames and environments are not paired".into()));
        }
        Ok(k)
    }

    pub fn parse(text: &str) -> Result<CallStack> {
        CallStack::from_value(&parse(text, "call stack")?)
    }
}

/// Inputs handed to contract creation by a successful `create`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateArgs {
    pub s: Atom,
    pub o: Atom,
    pub g: BigInt,
    pub p: BigInt,
    pub v: BigInt,
    pub i: Value,
    pub e: BigInt,
}

impl CreateArgs {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("s", Value::Atom(self.s.clone())),
            ("o", Value::Atom(self.o.clone())),
            ("g", int(&self.g)),
            ("p", int(&self.p)),
            ("v", int(&self.v)),
            ("i", self.i.clone()),
            ("e", int(&self.e)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Created {
    pub args: CreateArgs,
    pub machine: Machine,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CreateOutcome {
    Created(Created),
    NotCreated(Machine),
}

pub fn transaction_validity(w: &World, t: &Transaction) -> bool {
    validity_failure(w, t).is_none()
}

fn validity_failure(w: &World, t: &Transaction) -> Option<String> {
    let Some(a) = w.acc.get(&t.sender) else {
        return Some(format!("sender `{}` has no account", t.sender.name()));
    };
    if t.tn != a.nonce {
        return Some(format!("nonce {} does not match account nonce {}", t.tn, a.nonce));
    }
    let need = &t.tg * &t.tp + &t.tv;
    if a.bal < need {
        return Some(format!("balance {} is below {need}", a.bal));
    }
    if t.tg.is_negative() {
        return Some("negative gas limit".into());
    }
    None
}

/// Debits `g * p` from `b` and counts one more transaction.
pub fn update_sender(a: &Acc, b: &BigInt, p: &BigInt, g: &BigInt) -> Result<Acc> {
    let cost = g * p;
    if *b < cost {
        return Err(EvmError::Underflow { bal: b.clone(), cost });
    }
    Ok(Acc {
        nonce: &a.nonce + BigInt::one(),
        bal: b - cost,
        code: a.code.clone(),
    })
}

pub fn checkpoint_state(w: &World, t: &Transaction) -> Result<World> {
    if w.step != Step::Initial {
        return Err(EvmError::NotEnabled(format!("world is at step `{}`", w.step.name())));
    }
    if let Some(why) = validity_failure(w, t) {
        return Err(EvmError::Rejected(why));
    }
    let a = w.account(&t.sender)?;
    let a_ = update_sender(a, &a.bal, &t.tp, &t.tg)?;
    let acc_ = kernel::override_rel(
        &accounts_value(&w.acc),
        &Value::set([Value::pair(Value::Atom(t.sender.clone()), a_.to_value())]),
    )?;
    if !kernel::is_pfun(&acc_)? {
        return Err(EvmError::Invariant("account map lost functionality".into()));
    }
    Ok(World {
        acc: accounts_from(&acc_)?,
        acc_cc: w.acc_cc.clone(),
        newaddr: w.newaddr.clone(),
        step: Step::CcBegins,
    })
}

/// Active memory words after touching `l` bytes from offset `f`.
pub fn mem_words(i: &BigInt, f: &BigInt, l: &BigInt) -> BigInt {
    if l.is_zero() {
        return i.clone();
    }
    let w = BigInt::from(WORD_BYTES);
    let needed = (f + l + &w - BigInt::one()) / w;
    needed.max(i.clone())
}

/// Address of the contract created by `a` at `nonce`.
pub fn new_addr(a: &Atom, nonce: &BigInt) -> Atom {
    Atom::with_ns(format!("new_{}_{nonce}", a.name()), Namespace::Addr)
}

/// Wraps a memory slice as a program value.
pub fn toprog(cells: &Value) -> Result<Value> {
    if !kernel::is_pfun(cells)? {
        return Err(EvmError::Invariant("program cells are not a partial function".into()));
    }
    Ok(Value::compound("prog", vec![cells.clone()]))
}

fn create2_guard(q: &Machine, w: &World, a: &Atom, n: &BigInt) -> Result<bool> {
    let v = q.word(1)?;
    Ok(v > w.account(a)?.bal || *n >= BigInt::from(MAX_CREATE_DEPTH))
}

fn pop3_push(q: &Machine, top: Value) -> Result<Machine> {
    q.require(3)?;
    let (f, l) = (q.word(2)?, q.word(3)?);
    let mut s = vec![top];
    s.extend_from_slice(&q.s[3..]);
    Ok(Machine {
        s,
        i: mem_words(&q.i, &f, &l),
        ..q.clone()
    })
}

/// `create` that fails: balance too low or too many nested creates.
pub fn create2(q: &Machine, w: &World, a: &Atom, n: &BigInt) -> Result<Machine> {
    q.require(3)?;
    if !create2_guard(q, w, a, n)? {
        return Err(EvmError::NotEnabled("the caller can afford the creation".into()));
    }
    pop3_push(q, Value::int(0))
}

/// `create` that succeeds and hands control to contract creation.
pub fn create_calls_cc(w: &World, q: &Machine, k: &CallStack) -> Result<Created> {
    let (Some(frame), Some(env)) = (k.cs.first(), k.ees.first()) else {
        return Err(EvmError::NotEnabled("empty call stack".into()));
    };
    if frame.current().map(Atom::name) != Some("create") {
        return Err(EvmError::NotEnabled("current instruction is not create".into()));
    }
    q.require(3)?;
    let (v, f, l) = (q.word(1)?, q.word(2)?, q.word(3)?);
    let caller = w.account(&env.ia)?;
    if v > caller.bal {
        return Err(EvmError::NotEnabled(format!("value {v} exceeds balance {}", caller.bal)));
    }
    if env.ie >= BigInt::from(MAX_CREATE_DEPTH) {
        return Err(EvmError::NotEnabled(format!("create depth {} reached", env.ie)));
    }
    let bounds = if l.is_zero() {
        Value::empty_set()
    } else {
        Value::set(num_iter(&f, &(&f + &l)).map(Value::Int))
    };
    let slice = kernel::dres(&bounds, &q.memory_value())?;
    let args = CreateArgs {
        s: env.ia.clone(),
        o: env.io.clone(),
        g: &q.g - &q.g / BigInt::from(64),
        p: env.ip.clone(),
        v,
        i: toprog(&slice)?,
        e: &env.ie + BigInt::one(),
    };
    let mut machine = pop3_push(q, Value::Atom(new_addr(&env.ia, &caller.nonce)))?;
    machine.out = Vec::new();
    Ok(Created {
        args,
        machine,
        step: Step::CcBegins,
    })
}

fn num_iter(lo: &BigInt, hi: &BigInt) -> impl Iterator<Item = BigInt> {
    let mut cur = lo.clone();
    let hi = hi.clone();
    std::iter::from_fn(move || {
        (cur < hi).then(|| {
            let out = cur.clone();
            cur += 1;
            out
        })
    })
}

/// Exactly one of the two `create` cases applies to a well-formed stack.
pub fn create_dispatch(q: &Machine, w: &World, k: &CallStack, a: &Atom, n: &BigInt) -> Result<CreateOutcome> {
    q.require(3)?;
    if create2_guard(q, w, a, n)? {
        return create2(q, w, a, n).map(CreateOutcome::NotCreated);
    }
    match k.ees.first() {
        Some(env) if env.ia == *a && env.ie == *n => {}
        _ => {
            return Err(EvmError::Invariant(
                "caller and depth disagree with the active environment".into(),
            ))
        }
    }
    create_calls_cc(w, q, k).map(CreateOutcome::Created)
}
