//! Executable semantics for finite-set specifications.

pub mod cli;
pub mod consensus;
pub mod eval;
pub mod evm;
pub mod formula;
pub mod goals;
pub mod kernel;
pub mod lang;
pub mod solver;
pub mod ttf;
pub mod value;
