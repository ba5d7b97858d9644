//! Command line front end. Every command produces a text report and a JSON
//! report with the same verdicts.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use crate::consensus::{Engine, Scenario};
use crate::evm::{self, CallStack, CreateOutcome, Machine, Transaction, World};
use crate::goals::{self, Builtin};
use crate::lang::{print_value, Program};
use crate::solver::{Proof, Scope, SolveResult, Solver, Witness};
use crate::ttf::{self, Status, TestCondition, Transition};
use crate::value::Value;

pub const EXIT_OK: i32 = 0;
/// Falsified goal, unsatisfiable formula, undecided search or rejected input.
pub const EXIT_REJECTED: i32 = 1;
/// Usage, parse and I/O errors.
pub const EXIT_USAGE: i32 = 2;

pub const SEED_VAR: &str = "SETFORGE_SEED";

#[derive(Parser, Debug)]
#[command(name = "setforge", version, about = "Evaluate, simulate, prove and test finite-set specifications")]
pub struct Cli {
    /// Search bounds: `default` or `atoms=K,ints=LO..HI,card=C,seq=L`.
    #[arg(long, global = true, default_value = "default")]
    pub scope: Scope,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the goal of a formula file.
    Eval {
        /// Formula file: sort aliases, clauses and one goal.
        file: PathBuf,
        /// Bundled model whose predicates the file may call.
        #[arg(long)]
        model: Option<Model>,
    },
    /// Replay a delivery schedule over the gossip network.
    Simulate {
        /// JSON file with `nodes`, `soup` and `schedule`.
        scenario: PathBuf,
        /// Write every configuration, one per line.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Discharge a bundled obligation or refute the goal of a file.
    Prove(ProveArgs),
    /// Derive test conditions from a transition's set operators.
    Mbt {
        /// checkpoint_state or rcv_addr.
        #[arg(long)]
        transition: String,
        /// `oplus`, `un`, `diff`, optionally `#N` to pick one occurrence.
        #[arg(long, required_unless_present = "all", conflicts_with = "all")]
        occurrence: Option<String>,
        /// Every partitioned occurrence, plus their combination.
        #[arg(long)]
        all: bool,
    },
    /// Run one step of the Ethereum fragment on a JSON fixture.
    Evm {
        #[command(subcommand)]
        command: EvmCommand,
    },
}

#[derive(Args, Debug)]
pub struct ProveArgs {
    /// Formula file whose goal must be unsatisfiable.
    #[arg(conflicts_with = "goal", required_unless_present = "goal")]
    pub file: Option<PathBuf>,
    /// Bundled obligation: checkpoint-pfun, psd-psas-disjoint or checkpoint-ttf.
    #[arg(long)]
    pub goal: Option<String>,
    /// Bundled model whose predicates the file may call.
    #[arg(long)]
    pub model: Option<Model>,
}

#[derive(Subcommand, Debug)]
pub enum EvmCommand {
    /// Apply one operation to the state in a fixture.
    Step {
        #[arg(long)]
        op: EvmOp,
        /// JSON file with the operation's inputs as value literals.
        fixture: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvmOp {
    Checkpoint,
    Create,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Evm,
    Consensus,
}

impl Model {
    fn program(self) -> Program {
        match self {
            Model::Evm => goals::evm_program(),
            Model::Consensus => goals::consensus_program(),
        }
    }
}

/// Exit status and both renderings of a command's result.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub code: i32,
    pub text: String,
    pub json: Json,
}

impl Report {
    fn new(code: i32, text: String, json: Json) -> Report {
        Report { code, text, json }
    }

    fn usage(msg: impl Into<String>) -> Report {
        let msg = msg.into();
        Report::new(EXIT_USAGE, format!("error: {msg}"), json!({ "error": msg }))
    }

    fn rejected(msg: impl Into<String>) -> Report {
        let msg = msg.into();
        Report::new(EXIT_REJECTED, format!("rejected: {msg}"), json!({ "rejected": msg }))
    }
}

/// Parses `args` (program name first) and runs the command, writing the
/// report to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if std::env::var_os(SEED_VAR).is_some() {
        let _ = writeln!(err, "error: {SEED_VAR} is set, but nothing here is random; unset it");
        return EXIT_USAGE;
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let target: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(target, "{}", e.render());
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let report = execute(&cli);
    let body = if cli.json {
        serde_json::to_string_pretty(&report.json).expect("reports serialize")
    } else {
        report.text.clone()
    };
    let target: &mut dyn Write = if report.code == EXIT_USAGE { err } else { out };
    let _ = writeln!(target, "{}", body.trim_end());
    report.code
}

pub fn execute(cli: &Cli) -> Report {
    match &cli.command {
        Command::Eval { file, model } => eval(file, *model, &cli.scope),
        Command::Simulate { scenario, trace_out } => simulate(scenario, trace_out.as_deref()),
        Command::Prove(args) => prove(args, &cli.scope),
        Command::Mbt {
            transition,
            occurrence,
            all,
        } => mbt(transition, if *all { "all" } else { occurrence.as_deref().unwrap_or("all") }, &cli.scope),
        Command::Evm {
            command: EvmCommand::Step { op, fixture },
        } => evm_step(*op, fixture),
    }
}

fn read(path: &Path) -> Result<String, Report> {
    std::fs::read_to_string(path).map_err(|e| Report::usage(format!("{}: {e}", path.display())))
}

fn load_goal(path: &Path, model: Option<Model>) -> Result<crate::formula::Formula, Report> {
    let src = read(path)?;
    let base = model.map(Model::program).unwrap_or_default();
    Program::parse_with(&src, &base)
        .and_then(|p| p.goal())
        .map_err(|e| Report::usage(format!("{}: {e}", path.display())))
}

fn witness_json(w: &Witness) -> Json {
    Json::Object(w.iter().map(|(k, v)| (k.clone(), Json::String(print_value(v)))).collect())
}

fn witness_text(w: &Witness, indent: &str) -> String {
    w.iter().map(|(k, v)| format!("{indent}{k} = {}\n", print_value(v))).collect()
}

fn eval(file: &Path, model: Option<Model>, scope: &Scope) -> Report {
    let f = match load_goal(file, model) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let scope_s = scope.to_string();
    match Solver::new(scope.clone()).solve(&f) {
        SolveResult::Sat(w) => Report::new(
            EXIT_OK,
            format!("Sat (scope: {scope_s})\n{}", witness_text(&w, "  ")),
            json!({ "verdict": "sat", "scope": scope_s, "witness": witness_json(&w) }),
        ),
        SolveResult::Unsat => Report::new(
            EXIT_REJECTED,
            format!("Unsat (scope: {scope_s})"),
            json!({ "verdict": "unsat", "scope": scope_s }),
        ),
        SolveResult::Unknown(r) => Report::new(
            EXIT_REJECTED,
            format!("Unknown (scope: {scope_s}): {r}"),
            json!({ "verdict": "unknown", "scope": scope_s, "reason": r }),
        ),
    }
}

fn simulate(path: &Path, trace_out: Option<&Path>) -> Report {
    let src = match read(path) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let scenario = match Scenario::from_json(&src) {
        Ok(s) => s,
        Err(e) => return Report::usage(format!("{}: {e}", path.display())),
    };
    let trace = match scenario.run(&Engine::default()) {
        Ok(t) => t,
        Err(e) => return Report::rejected(e.to_string()),
    };
    if let Some(p) = trace_out {
        let lines: String = trace.confs.iter().map(|c| format!("{c}\n")).collect();
        if let Err(e) = std::fs::write(p, lines) {
            return Report::usage(format!("{}: {e}", p.display()));
        }
    }
    let set_text = |ps: &std::collections::BTreeSet<crate::consensus::Packet>| {
        print_value(&Value::set(ps.iter().map(|p| p.to_value())))
    };
    let mut text = String::new();
    let mut steps = Vec::new();
    for (i, (st, conf)) in trace.steps.iter().zip(&trace.confs[1..]).enumerate() {
        let node = conf.delta.get(&st.delivered.dst);
        let addrs = node.map(|s| print_value(&s.to_value())).unwrap_or_default();
        text.push_str(&format!(
            "step {}: deliver {}{}\n  emitted = {}\n  {} = {}\n",
            i + 1,
            st.delivered,
            if st.injected { " (injected)" } else { "" },
            set_text(&st.emitted),
            st.delivered.dst.name(),
            addrs
        ));
        steps.push(json!({
            "delivered": st.delivered.to_string(),
            "injected": st.injected,
            "handled": st.handled,
            "emitted": st.emitted.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            "state": addrs,
        }));
    }
    let last = trace.last();
    let this = scenario.this.name().to_string();
    let final_as = last
        .delta
        .get(&scenario.this)
        .map(|s| print_value(&Value::set(s.addrs.iter().cloned().map(Value::Atom))))
        .unwrap_or_else(|| "{}".into());
    text.push_str(&format!("final {this}.as = {final_as}\n"));
    text.push_str(&format!("final soup = {}\n", set_text(&last.soup)));
    Report::new(
        EXIT_OK,
        text,
        json!({
            "steps": steps,
            "final": { "node": this, "as": final_as, "conf": last.to_string() },
        }),
    )
}

fn proof_report(name: &str, proof: Proof, scope: &Scope) -> Report {
    let scope_s = scope.to_string();
    match proof {
        Proof::Verified => Report::new(
            EXIT_OK,
            format!("{name}: Verified (scope: {scope_s})"),
            json!({ "goal": name, "verdict": "verified", "scope": scope_s }),
        ),
        Proof::Counterexample(w) => Report::new(
            EXIT_REJECTED,
            format!("{name}: Counterexample (scope: {scope_s})\n{}", witness_text(&w, "  ")),
            json!({ "goal": name, "verdict": "counterexample", "scope": scope_s, "witness": witness_json(&w) }),
        ),
        Proof::Unknown(r) => Report::new(
            EXIT_REJECTED,
            format!("{name}: Unknown (scope: {scope_s}): {r}"),
            json!({ "goal": name, "verdict": "unknown", "scope": scope_s, "reason": r }),
        ),
    }
}

fn prove(args: &ProveArgs, scope: &Scope) -> Report {
    if let Some(name) = &args.goal {
        return match goals::builtin(name) {
            None => Report::usage(format!(
                "unknown goal `{name}` (available: {})",
                goals::BUILTIN_NAMES.join(", ")
            )),
            Some(Builtin::Obligation(ob)) => {
                let proof = Solver::new(scope.clone()).prove_implication(&ob.hyp, &ob.concl);
                proof_report(ob.name, proof, scope)
            }
            Some(Builtin::CheckpointTtf) => mbt("checkpoint_state", "oplus", scope),
        };
    }
    let file = args.file.as_deref().expect("clap requires a file or a goal");
    let f = match load_goal(file, args.model) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let proof = match Solver::new(scope.clone()).check_unsat(&f) {
        Ok(crate::solver::Refutation::Unsat) => Proof::Verified,
        Ok(crate::solver::Refutation::Counterexample(w)) => Proof::Counterexample(w),
        Err(u) => Proof::Unknown(u.0),
    };
    proof_report(&file.display().to_string(), proof, scope)
}

fn condition_json(c: &TestCondition) -> Json {
    let cases: Vec<Json> = c
        .cases
        .iter()
        .map(|k| json!({ "occurrence": k.occurrence, "case": k.case, "row": k.label, "label": k.specialized }))
        .collect();
    let mut out = json!({
        "label": c.label(),
        "cases": cases,
        "status": c.status.name(),
        "condition": c.text(),
    });
    match &c.status {
        Status::Satisfiable(_) => {
            let tc = ttf::derive_test_case(c).expect("satisfiable conditions have witnesses");
            out["fixture"] = json!({
                "name": tc.name,
                "values": Json::Object(tc.bindings.iter().map(|(k, v)| (k.clone(), Json::String(print_value(v)))).collect()),
            });
        }
        Status::Unknown(r) => out["reason"] = json!(r),
        _ => {}
    }
    out
}

fn condition_text(c: &TestCondition, out: &mut String) {
    let case = c
        .cases
        .iter()
        .map(|k| format!("{}.{}", k.occurrence, k.case))
        .collect::<Vec<_>>()
        .join("+");
    out.push_str(&format!("  [{case}] {}: {}\n", c.status.name(), c.label()));
    match &c.status {
        Status::Satisfiable(_) => {
            let tc = ttf::derive_test_case(c).expect("satisfiable conditions have witnesses");
            let b: BTreeMap<String, Value> = tc.bindings;
            out.push_str(&witness_text(&b, "      "));
        }
        Status::Unknown(r) => out.push_str(&format!("      reason: {r}\n")),
        _ => {}
    }
}

fn mbt(transition: &str, selector: &str, scope: &Scope) -> Report {
    let t = match Transition::builtin(transition) {
        Ok(t) => t,
        Err(e) => return Report::usage(e.to_string()),
    };
    let occs = match t.select(selector) {
        Ok(o) => o,
        Err(e) => return Report::usage(e.to_string()),
    };
    let scope_s = scope.to_string();
    let mut text = format!("transition {} (scope: {scope_s})\n", t.name);
    let mut sections = Vec::new();
    let mut survivors = Vec::new();
    let mut undecided = false;
    for occ in &occs {
        let raw = match ttf::instantiate(occ, &t) {
            Ok(r) => r,
            Err(e) => return Report::usage(e.to_string()),
        };
        let raw_count = raw.len();
        let pruned = ttf::prune(raw, scope);
        let sat = pruned.iter().filter(|c| c.is_satisfiable()).count();
        undecided |= pruned.iter().any(|c| matches!(c.status, Status::Unknown(_)));
        text.push_str(&format!("occurrence {occ}: {raw_count} raw, {sat} satisfiable\n"));
        for c in &pruned {
            condition_text(c, &mut text);
        }
        sections.push(json!({
            "occurrence": occ.to_string(),
            "raw": raw_count,
            "satisfiable": sat,
            "conditions": pruned.iter().map(condition_json).collect::<Vec<_>>(),
        }));
        survivors.push(pruned.into_iter().filter(|c| !matches!(c.status, Status::Infeasible)).collect::<Vec<_>>());
    }
    let mut report = json!({ "transition": t.name, "scope": scope_s, "occurrences": sections });
    if survivors.len() > 1 {
        let combined = ttf::combine(survivors, scope);
        undecided |= combined.iter().any(|c| matches!(c.status, Status::Unknown(_)));
        text.push_str(&format!("combined: {} feasible\n", combined.len()));
        for c in &combined {
            condition_text(c, &mut text);
        }
        report["combined"] = Json::Array(combined.iter().map(condition_json).collect());
    }
    Report::new(if undecided { EXIT_REJECTED } else { EXIT_OK }, text, report)
}

fn fixture_field(doc: &Json, key: &str) -> Result<String, Report> {
    doc.get(key)
        .and_then(Json::as_str)
        .map(str::to_string)
        .ok_or_else(|| Report::usage(format!("fixture needs a string field `{key}`")))
}

fn evm_step(op: EvmOp, path: &Path) -> Report {
    let run = || -> Result<Report, Report> {
        let src = read(path)?;
        let doc: Json = serde_json::from_str(&src).map_err(|e| Report::usage(format!("{}: {e}", path.display())))?;
        let usage = |e: evm::EvmError| Report::usage(format!("{}: {e}", path.display()));
        let world = World::parse(&fixture_field(&doc, "world")?).map_err(usage)?;
        match op {
            EvmOp::Checkpoint => {
                let t = Transaction::parse(&fixture_field(&doc, "transaction")?).map_err(usage)?;
                let w2 = evm::checkpoint_state(&world, &t).map_err(|e| Report::rejected(e.to_string()))?;
                let text = print_value(&w2.to_value());
                Ok(Report::new(
                    EXIT_OK,
                    format!("world' = {text}"),
                    json!({ "op": "checkpoint", "world": text }),
                ))
            }
            EvmOp::Create => {
                let q = Machine::parse(&fixture_field(&doc, "machine")?).map_err(usage)?;
                let k = CallStack::parse(&fixture_field(&doc, "callstack")?).map_err(usage)?;
                let env = k
                    .ees
                    .first()
                    .ok_or_else(|| Report::rejected("the call stack has no environment"))?;
                let outcome = evm::create_dispatch(&q, &world, &k, &env.ia, &env.ie)
                    .map_err(|e| Report::rejected(e.to_string()))?;
                Ok(match outcome {
                    CreateOutcome::Created(c) => {
                        let (args, m) = (print_value(&c.args.to_value()), print_value(&c.machine.to_value()));
                        Report::new(
                            EXIT_OK,
                            format!("created\n  args = {args}\n  machine' = {m}\n  step' = {}", c.step.name()),
                            json!({ "op": "create", "outcome": "created", "args": args, "machine": m, "step": c.step.name() }),
                        )
                    }
                    CreateOutcome::NotCreated(m) => {
                        let m = print_value(&m.to_value());
                        Report::new(
                            EXIT_OK,
                            format!("not created\n  machine' = {m}"),
                            json!({ "op": "create", "outcome": "not-created", "machine": m }),
                        )
                    }
                })
            }
        }
    };
    run().unwrap_or_else(|r| r)
}
