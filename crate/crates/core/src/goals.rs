//! Bundled models and the proof obligations shipped with them.

use crate::formula::Formula;
use crate::lang::{parse_formula, Program};
use crate::solver::Scope;

pub const EVM_MODEL: &str = include_str!("../models/evm.slog");
pub const CONSENSUS_MODEL: &str = include_str!("../models/consensus.slog");

pub fn evm_program() -> Program {
    Program::parse(EVM_MODEL).expect("bundled EVM model parses")
}

pub fn consensus_program() -> Program {
    Program::parse(CONSENSUS_MODEL).expect("bundled consensus model parses")
}

/// An implication `hyp ⟹ concl` checked within a scope.
#[derive(Debug, Clone)]
pub struct Obligation {
    pub name: &'static str,
    pub summary: &'static str,
    pub hyp: Formula,
    pub concl: Formula,
    pub scope: Scope,
}

#[derive(Debug, Clone)]
pub enum Builtin {
    Obligation(Obligation),
    /// The partition test run over the checkpoint step's override.
    CheckpointTtf,
}

pub const BUILTIN_NAMES: [&str; 3] = ["checkpoint-pfun", "psd-psas-disjoint", "checkpoint-ttf"];

const CHECKPOINT_PFUN: &str = "
  dec(World,world) & dec(Trans,transaction) &
  World = {[acc,Acc] / Rest} &
  pfun(Acc) &
  checkpointState(World,Trans,World_) &
  World_ = {[acc,Acc_] / Rest_}.
";

const PSD_PSAS: &str = "
  dec(Asm,set(addr)) & dec(As,set(addr)) & dec(As_,set(addr)) &
  diff(Asm,As,D) &
  PsD = ris(A in D,[],true,[this,A,connectMsg]) &
  PsAs = ris(A in As,[],true,[this,A,addrMsg(As_)]).
";

pub fn builtin(name: &str) -> Option<Builtin> {
    let goal = |base: Program, src: &str| {
        Program::parse_with(src, &base)
            .and_then(|p| p.goal())
            .expect("bundled goal parses")
    };
    Some(match name {
        "checkpoint-pfun" => Builtin::Obligation(Obligation {
            name: "checkpoint-pfun",
            summary: "the checkpoint step keeps the account map a partial function",
            hyp: goal(evm_program(), CHECKPOINT_PFUN),
            concl: parse_formula("pfun(Acc_)").unwrap(),
            scope: Scope::default(),
        }),
        "psd-psas-disjoint" => Builtin::Obligation(Obligation {
            name: "psd-psas-disjoint",
            summary: "connect packets and forwarded address packets never overlap",
            hyp: goal(consensus_program(), PSD_PSAS),
            concl: parse_formula("disj(PsD,PsAs)").unwrap(),
            scope: Scope::default(),
        }),
        "checkpoint-ttf" => Builtin::CheckpointTtf,
        _ => return None,
    })
}
