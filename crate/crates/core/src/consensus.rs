//! Gossip layer of a blockchain node network: local node states, the packet
//! soup, and a delivery engine that lifts per-node transitions to global
//! steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kernel::{self, KernelError};
use crate::lang::{self, print_value};
use crate::value::{Atom, Namespace, Value};

pub const ADDR_MSG: &str = "addrMsg";
pub const CONNECT_MSG: &str = "connectMsg";
/// Source of packets injected from outside the network.
pub const ENV: &str = "env";
/// Reserved address that never sends.
pub const NULL: &str = "null";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("packet is addressed to `{found}`, not to `{expected}`")]
    NotAddressed { expected: String, found: String },
    #[error("no transition of `{node}` is enabled by a `{kind}` message")]
    NotEnabled { node: String, kind: String },
    #[error("packet {0} is not in the soup")]
    NoSuchPacket(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("a configuration needs at least one node")]
    NoNodes,
    #[error("schedule step {step}: {reason}")]
    Schedule { step: usize, reason: String },
    #[error("malformed {what}: {text}")]
    Malformed { what: &'static str, text: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn malformed(what: &'static str, v: &Value) -> ConsensusError {
    ConsensusError::Malformed {
        what,
        text: print_value(v),
    }
}

fn addr(a: &Atom) -> Atom {
    a.tagged(Namespace::Addr)
}

fn atom_set(v: &Value, ns: Namespace, what: &'static str) -> Result<BTreeSet<Atom>, ConsensusError> {
    let s = v.as_set().ok_or_else(|| malformed(what, v))?;
    s.iter()
        .map(|x| x.as_atom().map(|a| a.tagged(ns)).ok_or_else(|| malformed(what, v)))
        .collect()
}

fn atoms_value(s: &BTreeSet<Atom>) -> Value {
    Value::set(s.iter().cloned().map(Value::Atom))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Msg {
    Addr(BTreeSet<Atom>),
    Connect,
    /// Any message kind without a registered transition.
    Other(Value),
}

impl Msg {
    pub fn to_value(&self) -> Value {
        match self {
            Msg::Addr(s) => Value::compound(ADDR_MSG, vec![atoms_value(s)]),
            Msg::Connect => Value::atom(CONNECT_MSG),
            Msg::Other(v) => v.clone(),
        }
    }

    pub fn from_value(v: &Value) -> Result<Msg, ConsensusError> {
        match v {
            Value::Compound(f, args) if f.name() == ADDR_MSG => match args.as_slice() {
                [s] => Ok(Msg::Addr(atom_set(s, Namespace::Addr, "address message")?)),
                _ => Err(malformed("address message", v)),
            },
            Value::Atom(a) if a.name() == CONNECT_MSG => Ok(Msg::Connect),
            other => Ok(Msg::Other(other.clone())),
        }
    }

    /// Message kind used to look up the receiving transition.
    pub fn kind(&self) -> String {
        match self {
            Msg::Addr(_) => ADDR_MSG.into(),
            Msg::Connect => CONNECT_MSG.into(),
            Msg::Other(Value::Compound(f, _)) | Msg::Other(Value::Atom(f)) => f.name().into(),
            Msg::Other(v) => v.kind_name().into(),
        }
    }
}

/// `[src, dst, msg]`. Ordered like its value form, so a soup iterates in
/// printed order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub src: Atom,
    pub dst: Atom,
    pub msg: Msg,
}

impl Packet {
    pub fn new(src: Atom, dst: Atom, msg: Msg) -> Result<Packet, ConsensusError> {
        if src.name() == NULL {
            return Err(ConsensusError::Invariant("packets cannot originate from null".into()));
        }
        Ok(Packet {
            src: addr(&src),
            dst: addr(&dst),
            msg,
        })
    }

    pub fn to_value(&self) -> Value {
        Value::Tuple(vec![
            Value::Atom(self.src.clone()),
            Value::Atom(self.dst.clone()),
            self.msg.to_value(),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Packet, ConsensusError> {
        match v {
            Value::Tuple(xs) if xs.len() == 3 => {
                let (Some(src), Some(dst)) = (xs[0].as_atom(), xs[1].as_atom()) else {
                    return Err(malformed("packet", v));
                };
                Packet::new(src.clone(), dst.clone(), Msg::from_value(&xs[2])?)
            }
            _ => Err(malformed("packet", v)),
        }
    }

    pub fn parse(text: &str) -> Result<Packet, ConsensusError> {
        let v = lang::parse_value(text).map_err(|e| ConsensusError::Malformed {
            what: "packet",
            text: e.to_string(),
        })?;
        Packet::from_value(&v)
    }
}

impl PartialOrd for Packet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Packet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_value().cmp(&other.to_value())
    }
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_value(&self.to_value()))
    }
}

/// A block in a node's forest. Carried but never interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub prev: Atom,
    pub txs: Vec<Atom>,
    pub pf: Atom,
}

impl Block {
    pub fn to_value(&self) -> Value {
        Value::Tuple(vec![
            Value::Atom(self.prev.clone()),
            Value::seq(self.txs.iter().cloned().map(Value::Atom)),
            Value::Atom(self.pf.clone()),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Block, ConsensusError> {
        let bad = || malformed("block", v);
        match v {
            Value::Tuple(xs) if xs.len() == 3 => {
                let prev = xs[0].as_atom().ok_or_else(bad)?.tagged(Namespace::Hash);
                let Value::Seq(txs) = &xs[1] else { return Err(bad()) };
                let txs: Vec<Atom> = txs
                    .iter()
                    .map(|t| t.as_atom().map(|a| a.tagged(Namespace::Tx)).ok_or_else(bad))
                    .collect::<Result<_, _>>()?;
                let distinct: BTreeSet<&Atom> = txs.iter().collect();
                if distinct.len() != txs.len() {
                    return Err(ConsensusError::Invariant("block lists a transaction twice".into()));
                }
                let pf = xs[2].as_atom().ok_or_else(bad)?.tagged(Namespace::Proof);
                Ok(Block { prev, txs, pf })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocState {
    pub addrs: BTreeSet<Atom>,
    pub bf: BTreeMap<Atom, Block>,
    pub tp: BTreeSet<Atom>,
}

impl LocState {
    pub fn to_value(&self) -> Value {
        Value::record([
            ("as", atoms_value(&self.addrs)),
            (
                "bf",
                Value::set(
                    self.bf
                        .iter()
                        .map(|(h, b)| Value::pair(Value::Atom(h.clone()), b.to_value())),
                ),
            ),
            ("tp", atoms_value(&self.tp)),
        ])
    }

    pub fn from_value(v: &Value) -> Result<LocState, ConsensusError> {
        let field = |name: &str| kernel::record_get(v, &Atom::new(name)).map_err(|_| malformed("local state", v));
        let bf_val = field("bf")?;
        if !kernel::is_pfun(&bf_val)? {
            return Err(ConsensusError::Invariant("block forest is not a partial function".into()));
        }
        let mut bf = BTreeMap::new();
        for (h, b) in kernel::pairs(&bf_val)? {
            let h = h.as_atom().ok_or_else(|| malformed("block forest", &bf_val))?;
            bf.insert(h.tagged(Namespace::Hash), Block::from_value(b)?);
        }
        Ok(LocState {
            addrs: atom_set(&field("as")?, Namespace::Addr, "local state")?,
            bf,
            tp: atom_set(&field("tp")?, Namespace::Tx, "local state")?,
        })
    }
}

/// Global configuration: node states and in-flight packets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Conf {
    pub delta: BTreeMap<Atom, LocState>,
    pub soup: BTreeSet<Packet>,
}

impl Conf {
    pub fn to_value(&self) -> Value {
        Value::record([
            (
                "delta",
                Value::set(
                    self.delta
                        .iter()
                        .map(|(n, s)| Value::pair(Value::Atom(n.clone()), s.to_value())),
                ),
            ),
            ("soup", Value::set(self.soup.iter().map(Packet::to_value))),
        ])
    }

    /// Packet at a 0-based position of the canonically ordered soup.
    pub fn packet_at(&self, index: usize) -> Option<&Packet> {
        self.soup.iter().nth(index)
    }
}

impl fmt::Display for Conf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_value(&self.to_value()))
    }
}

pub fn init_conf(nodes: &BTreeSet<Atom>) -> Result<Conf, ConsensusError> {
    if nodes.is_empty() {
        return Err(ConsensusError::NoNodes);
    }
    Ok(Conf {
        delta: nodes.iter().map(|n| (addr(n), LocState::default())).collect(),
        soup: BTreeSet::new(),
    })
}

/// Receiving an address message: learn the addresses, connect to the new
/// ones, and tell every previously known peer about the updated set.
pub fn rcv_addr(me: &Atom, s: &LocState, p: &Packet) -> Result<(BTreeSet<Packet>, LocState), ConsensusError> {
    if p.dst != *me {
        return Err(ConsensusError::NotAddressed {
            expected: me.name().into(),
            found: p.dst.name().into(),
        });
    }
    let Msg::Addr(asm) = &p.msg else {
        return Err(ConsensusError::NotEnabled {
            node: me.name().into(),
            kind: p.msg.kind(),
        });
    };
    let known = atoms_value(&s.addrs);
    let received = atoms_value(asm);
    let known_ = kernel::union(&known, &received)?;
    let fresh = kernel::difference(&received, &known)?;
    let me_v = Value::Atom(me.clone());
    let to_new = kernel::ris_eval(
        &fresh,
        |_| Ok::<_, KernelError>(true),
        |a| Ok(Value::Tuple(vec![me_v.clone(), a.clone(), Msg::Connect.to_value()])),
    )?;
    let forward = Value::compound(ADDR_MSG, vec![known_.clone()]);
    let to_old = kernel::ris_eval(
        &known,
        |_| Ok::<_, KernelError>(true),
        |a| Ok(Value::Tuple(vec![me_v.clone(), a.clone(), forward.clone()])),
    )?;
    if !kernel::disjoint(&to_new, &to_old)? {
        return Err(ConsensusError::Invariant(
            "connect packets overlap forwarded address packets".into(),
        ));
    }
    let ps = kernel::union(&to_new, &to_old)?;
    let packets = kernel::expect_set(&ps)?
        .iter()
        .map(Packet::from_value)
        .collect::<Result<BTreeSet<_>, _>>()?;
    let s2 = LocState {
        addrs: atom_set(&known_, Namespace::Addr, "address set")?,
        bf: s.bf.clone(),
        tp: s.tp.clone(),
    };
    Ok((packets, s2))
}

pub type LocalTransition = fn(&Atom, &LocState, &Packet) -> Result<(BTreeSet<Packet>, LocState), ConsensusError>;

/// Effect of delivering one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub conf: Conf,
    pub emitted: BTreeSet<Packet>,
    /// False when no transition handles the message kind and the packet was
    /// only consumed.
    pub handled: bool,
}

/// Delivery engine with receiving transitions registered by message kind.
#[derive(Clone)]
pub struct Engine {
    transitions: BTreeMap<String, LocalTransition>,
}

impl Default for Engine {
    fn default() -> Self {
        let mut e = Engine::empty();
        e.register(ADDR_MSG, rcv_addr);
        e
    }
}

impl Engine {
    pub fn empty() -> Engine {
        Engine {
            transitions: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, kind: &str, t: LocalTransition) {
        self.transitions.insert(kind.to_string(), t);
    }

    pub fn deliver(&self, c: &Conf, p: &Packet) -> Result<Delivery, ConsensusError> {
        if !c.soup.contains(p) {
            return Err(ConsensusError::NoSuchPacket(p.to_string()));
        }
        let Some(s) = c.delta.get(&p.dst) else {
            return Err(ConsensusError::UnknownNode(p.dst.name().into()));
        };
        let mut next = c.clone();
        next.soup.remove(p);
        let Some(t) = self.transitions.get(&p.msg.kind()) else {
            return Ok(Delivery {
                conf: next,
                emitted: BTreeSet::new(),
                handled: false,
            });
        };
        let (ps, s2) = t(&p.dst, s, p)?;
        next.delta.insert(p.dst.clone(), s2);
        next.soup.extend(ps.iter().cloned());
        Ok(Delivery {
            conf: next,
            emitted: ps,
            handled: true,
        })
    }

    pub fn deliver_step(&self, c: &Conf, p: &Packet) -> Result<Conf, ConsensusError> {
        self.deliver(c, p).map(|d| d.conf)
    }

    pub fn run_schedule(&self, c0: &Conf, schedule: &[Selector]) -> Result<Trace, ConsensusError> {
        let mut trace = Trace {
            confs: vec![c0.clone()],
            steps: Vec::new(),
        };
        for (i, sel) in schedule.iter().enumerate() {
            let step = i + 1;
            let mut cur = trace.confs.last().unwrap().clone();
            let (packet, injected) = match sel {
                Selector::Index(k) => match cur.packet_at(*k) {
                    Some(p) => (p.clone(), false),
                    None => {
                        return Err(ConsensusError::Schedule {
                            step,
                            reason: format!("no packet at index {k} (soup has {})", cur.soup.len()),
                        })
                    }
                },
                Selector::Literal(p) => {
                    if cur.soup.contains(p) {
                        (p.clone(), false)
                    } else if p.src.name() == ENV {
                        cur.soup.insert(p.clone());
                        (p.clone(), true)
                    } else {
                        return Err(ConsensusError::Schedule {
                            step,
                            reason: format!("packet {p} is not in the soup"),
                        });
                    }
                }
            };
            let d = self.deliver(&cur, &packet).map_err(|e| ConsensusError::Schedule {
                step,
                reason: e.to_string(),
            })?;
            trace.steps.push(StepRecord {
                delivered: packet,
                injected,
                emitted: d.emitted,
                handled: d.handled,
            });
            trace.confs.push(d.conf);
        }
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// 0-based position in the canonically ordered soup.
    Index(usize),
    /// A literal packet; one sent by `env` is injected when absent.
    Literal(Packet),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub delivered: Packet,
    pub injected: bool,
    pub emitted: BTreeSet<Packet>,
    pub handled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub confs: Vec<Conf>,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    pub fn last(&self) -> &Conf {
        self.confs.last().expect("a trace holds its initial configuration")
    }
}

/// A replayable simulation: initial nodes and soup plus a delivery schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub nodes: BTreeSet<Atom>,
    pub this: Atom,
    pub soup: BTreeSet<Packet>,
    pub schedule: Vec<Selector>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ConsensusError> {
        let bad = |text: String| ConsensusError::Malformed { what: "scenario", text };
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let str_field = |v: &serde_json::Value, what: &str| -> Result<String, ConsensusError> {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| bad(format!("{what} must be a string")))
        };
        let atom = |s: &str| -> Result<Atom, ConsensusError> {
            match lang::parse_value(s) {
                Ok(Value::Atom(a)) => Ok(addr(&a)),
                _ => Err(bad(format!("`{s}` is not an atom"))),
            }
        };
        let list = |key: &str| -> Result<Vec<serde_json::Value>, ConsensusError> {
            match doc.get(key) {
                None => Ok(vec![]),
                Some(serde_json::Value::Array(xs)) => Ok(xs.clone()),
                Some(_) => Err(bad(format!("`{key}` must be a list"))),
            }
        };
        let nodes = list("nodes")?
            .iter()
            .map(|n| atom(&str_field(n, "node")?))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let this = match doc.get("this") {
            Some(v) => atom(&str_field(v, "this")?)?,
            None => nodes.iter().next().cloned().ok_or(ConsensusError::NoNodes)?,
        };
        let soup = list("soup")?
            .iter()
            .map(|p| Packet::parse(&str_field(p, "packet")?))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let schedule = list("schedule")?
            .iter()
            .map(|s| match s {
                serde_json::Value::Number(n) => n
                    .as_u64()
                    .map(|k| Selector::Index(k as usize))
                    .ok_or_else(|| bad(format!("bad index {n}"))),
                serde_json::Value::String(p) => Packet::parse(p).map(Selector::Literal),
                other => Err(bad(format!("bad selector {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scenario {
            nodes,
            this,
            soup,
            schedule,
        })
    }

    pub fn initial(&self) -> Result<Conf, ConsensusError> {
        let mut c = init_conf(&self.nodes)?;
        c.soup = self.soup.clone();
        Ok(c)
    }

    pub fn run(&self, engine: &Engine) -> Result<Trace, ConsensusError> {
        engine.run_schedule(&self.initial()?, &self.schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: &str) -> Atom {
        Atom::with_ns(n, Namespace::Addr)
    }

    fn addrs(ns: &[&str]) -> BTreeSet<Atom> {
        ns.iter().map(|n| a(n)).collect()
    }

    fn pkt(src: &str, dst: &str, msg: Msg) -> Packet {
        Packet::new(a(src), a(dst), msg).unwrap()
    }

    #[test]
    fn receiving_known_addresses_only_forwards() {
        let s = LocState {
            addrs: addrs(&["a1"]),
            ..Default::default()
        };
        let (ps, s2) = rcv_addr(&a("this"), &s, &pkt("x", "this", Msg::Addr(addrs(&["a1"])))).unwrap();
        assert_eq!(s2, s);
        assert_eq!(ps, [pkt("this", "a1", Msg::Addr(addrs(&["a1"])))].into());
    }

    #[test]
    fn wrong_destination_is_rejected() {
        let s = LocState::default();
        let p = pkt("x", "other", Msg::Addr(addrs(&["a1"])));
        assert!(matches!(
            rcv_addr(&a("this"), &s, &p),
            Err(ConsensusError::NotAddressed { .. })
        ));
        let p = pkt("x", "this", Msg::Connect);
        assert!(matches!(rcv_addr(&a("this"), &s, &p), Err(ConsensusError::NotEnabled { .. })));
    }

    #[test]
    fn null_cannot_send() {
        assert!(Packet::new(a(NULL), a("n1"), Msg::Connect).is_err());
    }

    #[test]
    fn packet_text_round_trip() {
        let p = Packet::parse("[env,this,addrMsg({a2,a1})]").unwrap();
        assert_eq!(p.to_string(), "[env,this,addrMsg({a1,a2})]");
        assert_eq!(p.msg, Msg::Addr(addrs(&["a1", "a2"])));
    }

    #[test]
    fn local_state_value_round_trip() {
        let s = LocState {
            addrs: addrs(&["a1", "a2"]),
            bf: [(
                Atom::with_ns("h1", Namespace::Hash),
                Block {
                    prev: Atom::with_ns("h0", Namespace::Hash),
                    txs: vec![Atom::with_ns("tx1", Namespace::Tx)],
                    pf: Atom::with_ns("pf1", Namespace::Proof),
                },
            )]
            .into(),
            tp: [Atom::with_ns("tx2", Namespace::Tx)].into(),
        };
        assert_eq!(LocState::from_value(&s.to_value()).unwrap(), s);
        assert!(s.to_value().check_namespaces().is_ok());
    }

    #[test]
    fn init_conf_requires_nodes() {
        assert_eq!(init_conf(&BTreeSet::new()), Err(ConsensusError::NoNodes));
        let c = init_conf(&addrs(&["n1", "n2"])).unwrap();
        assert_eq!(c.delta.len(), 2);
        assert!(c.soup.is_empty());
    }
}
