//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::{oracle, sample};
use num_bigint::BigInt;
use setforge::cli;
use setforge::consensus::{Engine, Msg, Packet, Scenario};
use setforge::eval::eval_formula;
use setforge::evm::{self, Acc, CallStack, ExecEnv, Frame, Machine, Step, World};
use setforge::formula::{Constraint, Formula, Fresh, Kind, Term};
use setforge::goals;
use setforge::kernel;
use setforge::lang::{parse_formula, parse_value, print_formula, print_value, Program};
use setforge::solver::{Scope, SolveResult, Solver};
use setforge::ttf::{self, Status, Transition};
use setforge::value::{Atom, Namespace, Value};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

fn v(text: &str) -> Value {
    parse_value(text).unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn packets(text: &str) -> BTreeSet<Packet> {
    v(text)
        .as_set()
        .expect("a set of packets")
        .iter()
        .map(|p| Packet::from_value(p).expect("a packet"))
        .collect()
}

fn addr_set(names: &[&str]) -> BTreeSet<Atom> {
    names.iter().map(|n| Atom::with_ns(n, Namespace::Addr)).collect()
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["setforge"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out, &mut err);
    let mut text = String::from_utf8(out).unwrap();
    text.push_str(&String::from_utf8(err).unwrap());
    (code, text)
}

fn rcvaddr_trace() -> Outcome {
    let start = Instant::now();
    let ps1 = packets("{[this,a1,connectMsg],[this,a2,connectMsg]}");
    let ps2 = packets("{[this,a3,connectMsg],[this,a1,addrMsg({a2,a1,a3})],[this,a2,addrMsg({a2,a1,a3})]}");

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/rcvaddr2.json");
    let scenario = Scenario::from_json(&std::fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let trace = scenario.run(&Engine::default()).map_err(|e| e.to_string())?;
    let this = Atom::with_ns("this", Namespace::Addr);
    let s1 = &trace.confs[1].delta[&this];
    let s2 = &trace.confs[2].delta[&this];
    check(s1.addrs == addr_set(&["a1", "a2"]), || format!("s1.as = {:?}", s1.addrs))?;
    check(s2.addrs == addr_set(&["a1", "a2", "a3"]), || format!("s2.as = {:?}", s2.addrs))?;
    check(trace.steps[0].emitted == ps1, || format!("Ps1 = {:?}", trace.steps[0].emitted))?;
    check(trace.steps[1].emitted == ps2, || format!("Ps2 = {:?}", trace.steps[1].emitted))?;
    check(
        trace.steps[1].delivered.msg == Msg::Addr(addr_set(&["a1", "a3"])),
        || "second delivery is not addrMsg({a1,a3})".into(),
    )?;

    // The same two steps through the clause-level model and the solver.
    let goal = Program::parse_with(
        "S = {[as,{}],[bf,{}],[tp,{}]} &
         P = [env,this,addrMsg({a1,a2})] &
         rcvAddr(S,P,Ps1,S1) &
         rcvAddr(S1,[env,this,addrMsg({a1,a3})],Ps2,S2).",
        &goals::consensus_program(),
    )
    .and_then(|p| p.goal())
    .map_err(|e| e.to_string())?;
    let SolveResult::Sat(w) = Solver::new(Scope::default()).solve(&goal) else {
        return Err("the clause-level trace is not satisfiable".into());
    };
    let get = |k: &str, f: &str| kernel::record_get(&w[k], &Atom::new(f)).unwrap();
    check(get("S1", "as") == v("{a1,a2}"), || format!("model S1 = {}", print_value(&w["S1"])))?;
    check(get("S2", "as") == v("{a1,a2,a3}"), || format!("model S2 = {}", print_value(&w["S2"])))?;
    check(w["Ps1"] == v("{[this,a1,connectMsg],[this,a2,connectMsg]}"), || "model Ps1 differs".into())?;
    check(
        w["Ps2"] == v("{[this,a3,connectMsg],[this,a1,addrMsg({a1,a2,a3})],[this,a2,addrMsg({a1,a2,a3})]}"),
        || format!("model Ps2 = {}", print_value(&w["Ps2"])),
    )?;

    let (code, text) = run_cli(&["simulate", path]);
    check(code == 0 && text.contains("final this.as = {a1,a2,a3}"), || text.clone())?;
    let took = within(Duration::from_secs(1), start)?;
    Ok(format!("engine, clause model and CLI agree ({took:.0?})"))
}

fn prove_goal(name: &str, limit: Duration) -> Outcome {
    let start = Instant::now();
    let (code, text) = run_cli(&["prove", "--goal", name, "--scope", "default"]);
    check(code == 0, || format!("exit {code}: {text}"))?;
    check(text.contains("Verified (scope: atoms=3,ints=0..8,card=3,seq=4)"), || text.clone())?;
    let took = within(limit, start)?;
    Ok(format!("{} ({took:.0?})", text.trim()))
}

fn ttf_reproduction() -> Outcome {
    let start = Instant::now();
    let t = Transition::builtin("checkpoint_state").map_err(|e| e.to_string())?;
    let occ = t.select("oplus").map_err(|e| e.to_string())?;
    check(occ.len() == 1, || format!("{} oplus occurrences", occ.len()))?;
    let raw = ttf::instantiate(&occ[0], &t).map_err(|e| e.to_string())?;
    check(raw.len() == 8, || format!("{} raw conditions", raw.len()))?;
    let pruned = ttf::prune(raw, &Scope::default());
    let sat: Vec<_> = pruned.iter().filter(|c| c.is_satisfiable()).collect();
    let labels: Vec<String> = sat.iter().map(|c| c.label()).collect();
    check(
        labels == ["dom acc = {sender}", "{sender} ⊂ dom acc"],
        || format!("satisfiable: {labels:?}"),
    )?;
    check(
        pruned.iter().all(|c| matches!(c.status, Status::Satisfiable(_) | Status::Infeasible)),
        || "undecided conditions".into(),
    )?;
    for c in &sat {
        let Status::Satisfiable(w) = &c.status else { unreachable!() };
        check(eval_formula(&c.formula(), w) == Ok(true), || format!("witness of `{}` fails", c.label()))?;
        let fixture = ttf::derive_test_case(c).map_err(|e| e.to_string())?;
        let world = World::from_value(&fixture.bindings["S"]).map_err(|e| e.to_string())?;
        let tx = evm::Transaction::from_value(&fixture.bindings["T"]).map_err(|e| e.to_string())?;
        let one = world.acc.len() == 1;
        check(one == (c.cases[0].case == 4), || format!("fixture of `{}` has {} accounts", c.label(), world.acc.len()))?;
        check(world.acc.contains_key(&tx.sender), || "sender has no account".into())?;
    }
    let (code, text) = run_cli(&["mbt", "--transition", "checkpoint_state", "--occurrence", "oplus"]);
    check(code == 0 && text.contains("8 raw, 2 satisfiable"), || text.clone())?;
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!("8 raw, 2 satisfiable: {} ({took:.0?})", labels.join(" | ")))
}

/// Which of the eight rows a pair of relations falls in, computed directly.
fn classify(r: &Value, g: &Value) -> usize {
    let pairs = |x: &Value| -> Vec<(Value, Value)> {
        kernel::pairs(x).unwrap().into_iter().map(|(a, b)| (a.clone(), b.clone())).collect()
    };
    let (dr, dg): (BTreeSet<Value>, BTreeSet<Value>) =
        (oracle::dom(&pairs(r)).into_iter().collect(), oracle::dom(&pairs(g)).into_iter().collect());
    match (dr.is_empty(), dg.is_empty()) {
        (true, true) => 1,
        (true, false) => 2,
        (false, true) => 3,
        _ if dr == dg => 4,
        _ if dg.is_subset(&dr) => 5,
        _ if dr.is_disjoint(&dg) => 6,
        _ if dr.is_subset(&dg) => 7,
        _ => 8,
    }
}

fn partition_exhaustive() -> Outcome {
    let keys = [Value::atom("a1"), Value::atom("a2")];
    let vals = [Value::int(0), Value::int(1)];
    let rels = common::relations(&keys, &vals, 4);
    let cases = ttf::standard_partition(Kind::Oplus).map_err(|e| e.to_string())?;
    let solver = Solver::new(Scope::default());
    let (r, g) = (Term::var("R"), Term::var("G"));
    let mut fresh = Fresh::new(["R", "G"].map(String::from).into());
    let conds: Vec<Formula> = cases.iter().map(|c| c.condition(Kind::Oplus, &r, &g, &mut fresh)).collect();
    let mut violations = 0;
    let mut pairs = 0;
    for rv in &rels {
        for gv in &rels {
            pairs += 1;
            let bind = Formula::conj(vec![
                Constraint::eq(r.clone(), Term::Lit(rv.clone())),
                Constraint::eq(g.clone(), Term::Lit(gv.clone())),
            ]);
            let holding: Vec<usize> = conds
                .iter()
                .enumerate()
                .filter(|(_, f)| solver.solve(&bind.and(f)).is_sat())
                .map(|(i, _)| i + 1)
                .collect();
            if holding != [classify(rv, gv)] {
                violations += 1;
            }
        }
    }
    check(violations == 0, || format!("{violations} of {pairs} relation pairs violate the partition"))?;
    Ok(format!("{pairs} relation pairs, each in exactly one row, 0 violations"))
}

fn addr(n: &str) -> Atom {
    Atom::with_ns(n, Namespace::Addr)
}

fn world_with(bal: i64, nonce: i64) -> World {
    World {
        acc: [(addr("a1"), Acc::new(nonce, bal, Value::atom("c1")).unwrap())].into(),
        acc_cc: Default::default(),
        newaddr: addr("a9"),
        step: Step::Initial,
    }
}

fn machine_with(stack: &[i64], g: i64) -> Machine {
    Machine {
        g: g.into(),
        pc: 3.into(),
        m: (0..128).map(|k| (BigInt::from(k), BigInt::from(k % 251))).collect(),
        i: 0.into(),
        s: stack.iter().map(|&x| Value::int(x)).collect(),
        out: vec![BigInt::from(4)],
    }
}

fn create_stack(ia: &str, ie: i64) -> CallStack {
    CallStack {
        cs: vec![Frame {
            code: vec![Atom::new("push"), Atom::new("create")],
            pc: 1,
        }],
        ees: vec![ExecEnv {
            ia: addr(ia),
            io: addr("a0"),
            ip: 3.into(),
            ie: ie.into(),
        }],
    }
}

fn create2_boundary() -> Outcome {
    let expect = vec![Value::int(0), Value::int(7)];
    let q = machine_with(&[5, 0, 64, 7], 6400);
    let low = evm::create2(&q, &world_with(3, 0), &addr("a1"), &0.into()).map_err(|e| e.to_string())?;
    let deep = evm::create2(&q, &world_with(100, 0), &addr("a1"), &1024.into()).map_err(|e| e.to_string())?;
    for (what, q2) in [("low balance", &low), ("depth 1024", &deep)] {
        check(q2.s == expect, || format!("{what}: stack {:?}", q2.s))?;
        check(q2.m == q.m && q2.g == q.g, || format!("{what}: memory or gas changed"))?;
        check(q2.i == BigInt::from(2), || format!("{what}: i' = {}", q2.i))?;
    }
    let mut violations = 0;
    let mut points = 0;
    for bal in 0..=3 {
        for v1 in 0..=3 {
            for depth in [1023, 1024] {
                points += 1;
                let (w, q, k) = (world_with(bal, 0), machine_with(&[v1, 0, 0, 9], 100), create_stack("a1", depth));
                let c1 = evm::create_calls_cc(&w, &q, &k).is_ok();
                let c2 = evm::create2(&q, &w, &addr("a1"), &depth.into()).is_ok();
                let expect_c1 = v1 <= bal && depth < 1024;
                let dispatched = evm::create_dispatch(&q, &w, &k, &addr("a1"), &depth.into());
                let agrees = match dispatched {
                    Ok(evm::CreateOutcome::Created(_)) => c1,
                    Ok(evm::CreateOutcome::NotCreated(_)) => c2,
                    Err(_) => false,
                };
                if c1 == c2 || c1 != expect_c1 || !agrees {
                    violations += 1;
                }
            }
        }
    }
    check(violations == 0, || format!("{violations} of {points} grid points violate complementarity"))?;
    Ok(format!("stack <0,7>, m and g unchanged; {points} grid points, 0 violations"))
}

fn create1_arithmetic() -> Outcome {
    let w = world_with(10, 2);
    let q = machine_with(&[5, 0, 64, 7], 6400);
    let c = evm::create_calls_cc(&w, &q, &create_stack("a1", 7)).map_err(|e| e.to_string())?;
    check(c.args.g == BigInt::from(6300), || format!("g? = {}", c.args.g))?;
    check(c.args.e == BigInt::from(8), || format!("e? = {}", c.args.e))?;
    check(c.args.v == BigInt::from(5), || format!("v? = {}", c.args.v))?;
    check(c.machine.out.is_empty(), || "out' is not empty".into())?;
    check(
        c.machine.s == vec![Value::Atom(evm::new_addr(&addr("a1"), &2.into())), Value::int(7)],
        || format!("s' = {:?}", c.machine.s),
    )?;
    check(c.step == Step::CcBegins, || "step' is not ccbegins".into())?;
    let slice = kernel::dres(&Value::set((0..64).map(Value::int)), &q.memory_value()).unwrap();
    check(c.args.i == evm::toprog(&slice).unwrap(), || "i? is not the memory slice".into())?;
    check(
        evm::create_calls_cc(&w, &q, &create_stack("a1", 1024)).is_err(),
        || "depth 1024 still creates".into(),
    )?;
    Ok("g?=6300, e?=Ie+1, out'=<>, head = new_addr(Ia, nonce)".into())
}

fn kernel_oracles() -> Outcome {
    let inputs = sample(
        (common::pair_list(), common::pair_list(), common::atom_set(3), common::atom_set(3), common::int_list()),
        1000,
        8,
    );
    let mut mismatches = Vec::new();
    for (i, (r, g, a, b, ns)) in inputs.iter().enumerate() {
        let (av, bv) = (Value::set(a.iter().cloned()), Value::set(b.iter().cloned()));
        let (rv, gv) = (common::rel_value(r), common::rel_value(g));
        let mut d: Vec<Value> = a.clone();
        d.extend(ns.iter().cloned());
        let dv = Value::set(d.iter().cloned());
        let nsv = Value::set(ns.iter().cloned());
        let filter = |x: &Value| x.as_int().is_some_and(|n| *n > BigInt::from(1));
        let pattern = |x: &Value| Value::Tuple(vec![Value::atom("this"), x.clone()]);
        let checks = [
            ("union", common::elems(&kernel::union(&av, &bv).unwrap()), oracle::union(a, b)),
            ("difference", common::elems(&kernel::difference(&av, &bv).unwrap()), oracle::difference(a, b)),
            ("override", common::elems(&kernel::override_rel(&rv, &gv).unwrap()), oracle::override_rel(r, g)),
            ("dres", common::elems(&kernel::dres(&dv, &rv).unwrap()), oracle::dres(&d, r)),
            (
                "ris",
                common::elems(
                    &kernel::ris_eval(&nsv, |x| Ok::<_, kernel::KernelError>(filter(x)), |x| Ok(pattern(x))).unwrap(),
                ),
                oracle::ris(ns, filter, pattern),
            ),
        ];
        for (op, got, want) in checks {
            if got != want {
                mismatches.push(format!("input {i}: {op}"));
            }
        }
    }
    check(mismatches.is_empty(), || format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]))?;
    Ok(format!("{} inputs x 5 operators, 0 mismatches", inputs.len()))
}

/// Formula text from the worked consensus example, as written there.
const REFERENCE_FORMULAS: [&str; 10] = [
    "S = {[as,As] / Rest}",
    "S = {[as,{}] / _}",
    "P = [_,this,addrMsg({a1,a2})]",
    "S = {[as,{}] / _} & P = [_,this,addrMsg({a1,a2})] & rcvAddr(S,P,Ps1,S1) & rcvAddr(S1,[_,this,addrMsg({a1,a3})],Ps2,S2)",
    "Ps1 = ris(A in {a1,a2/_N2},[],true,[this,A,connectMsg],true)",
    "S1 = {[as,{a1,a2}]/R}",
    "Ps2 = {[this,a3,connectMsg],[this,a1,addrMsg({a2,a1,a3})],[this,a2,addrMsg({a2,a1,a3})] / ris(A in _N1,[],true,[this,A,connectMsg],true)}",
    "S2 = {[as,{a2,a1,a3}]/R}",
    "subset(_N2,{a1,a2}) & subset(_N1,{a1,a3}) & a1 nin _N1 & a2 nin _N1",
    "diff(Asm,As,D) & PsD = ris(A in D,[],true,[this,A,connectMsg]) & PsAs = ris(A in As,[],true,[this,A,addrMsg(As_)]) & ndisj(PsD,PsAs)",
];

const REFERENCE_CLAUSE: &str = "rcvAddr(S,P,Ps,S_) :-
  S = {[as,As] / Rest} &
  P = [_,this, addrMsg(Asm)] &
  un(As,Asm,As_) &
  diff(Asm,As,D) &
  PsD = ris(A in D,[],true,[this,A,connectMsg]) &
  PsAs = ris(A in As,[],true,[this,A,addrMsg(As_)]) &
  un(PsD,PsAs,Ps) &
  S_ = {[as,As_] / Rest}.";

fn round_trip(f: &Formula) -> Result<(), String> {
    let text = print_formula(f);
    match parse_formula(&text) {
        Ok(g) if g == *f => Ok(()),
        Ok(g) => Err(format!("`{text}` reparses as `{}`", print_formula(&g))),
        Err(e) => Err(format!("`{text}`: {e}")),
    }
}

fn parser_round_trip() -> Outcome {
    let mut failures = Vec::new();
    let values = sample(common::value(), 1000, 9);
    for x in &values {
        let text = print_value(x);
        match parse_value(&text) {
            Ok(y) if y == *x => {}
            other => failures.push(format!("value `{text}` -> {other:?}")),
        }
    }
    let formulas = sample(common::formula(), 1000, 10);
    for f in &formulas {
        if let Err(e) = round_trip(f) {
            failures.push(e);
        }
    }
    let mut snippets = 0;
    // Calls to the clause need its definition; plain formulas parse alone.
    let base = goals::consensus_program();
    for src in REFERENCE_FORMULAS {
        snippets += 1;
        let parsed = if src.contains("rcvAddr(") {
            Program::parse_with(&format!("{src}."), &base).and_then(|p| p.goal()).map_err(|e| e.to_string())
        } else {
            parse_formula(src).map_err(|e| e.to_string())
        };
        match parsed {
            Ok(f) => {
                if let Err(e) = round_trip(&f) {
                    failures.push(e);
                }
            }
            Err(e) => failures.push(format!("`{src}`: {e}")),
        }
    }
    snippets += 1;
    match Program::parse(REFERENCE_CLAUSE).and_then(|p| p.predicate("rcvAddr")) {
        Ok(f) => {
            if let Err(e) = round_trip(&f) {
                failures.push(e);
            }
        }
        Err(e) => failures.push(format!("clause: {e}")),
    }
    check(failures.is_empty(), || format!("{} mismatches, first: {}", failures.len(), failures[0]))?;
    Ok(format!(
        "{} values, {} formulas, {snippets} reference snippets, 0 mismatches",
        values.len(),
        formulas.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("rcvaddr trace reproduction", rcvaddr_trace),
        ("psd/psas disjointness", || prove_goal("psd-psas-disjoint", Duration::from_secs(10))),
        ("pfun preservation by checkpoint", || prove_goal("checkpoint-pfun", Duration::from_secs(30))),
        ("ttf reproduction on checkpoint", ttf_reproduction),
        ("override partition exhaustive and exclusive", partition_exhaustive),
        ("create2 boundary and guard complementarity", create2_boundary),
        ("create1 arithmetic", create1_arithmetic),
        ("kernel oracle equivalence", kernel_oracles),
        ("parser round trip", parser_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
