//! Textual syntax for values, formulas and programs.
//!
//! Programs are `.`-terminated items: predicate clauses `name(Args) :- body.`,
//! sort aliases `sort name = S.` and at most one headless goal formula.
//! Predicate calls are expanded by inlining.

mod lexer;
mod parser;
mod printer;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::formula::{Constraint, Formula, Sort, Term};
use crate::value::Value;

pub use parser::Expr;
use parser::{plain_formula, Item, Parser};
pub use printer::{print_constraint, print_formula, print_sort, print_term, print_value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
        found: String,
    },
    #[error("value is not ground: contains variable `{0}`")]
    NotGround(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown predicate `{name}/{arity}` at {line}:{col}")]
    UnknownPredicate {
        name: String,
        arity: usize,
        line: usize,
        col: usize,
    },
    #[error("recursive predicate `{0}` cannot be inlined")]
    Recursive(String),
    #[error("no clause named `{0}`")]
    UnknownGoal(String),
    #[error("the program has no goal")]
    NoGoal,
    #[error("only one headless goal is allowed per program")]
    MultipleGoals,
}

pub fn parse_formula(src: &str) -> Result<Formula, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.formula()?;
    p.expect_eof()?;
    plain_formula(e).map_err(|name| ParseError::Syntax {
        line: 1,
        col: 1,
        msg: format!("call to predicate `{name}` outside a program"),
        found: format!("`{name}`"),
    })
}

pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(src)?;
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

pub fn parse_value(src: &str) -> Result<Value, ParseError> {
    match parse_term(src)? {
        Term::Lit(v) => Ok(v),
        t => {
            let mut vs = Vec::new();
            t.free_vars_into(&mut vs);
            let name = vs.into_iter().next().map(|v| if v.starts_with("_G") { "_".to_string() } else { v });
            Err(ParseError::NotGround(name.unwrap_or_else(|| print_term(&t))))
        }
    }
}

pub fn parse_sort(src: &str) -> Result<Sort, ParseError> {
    let mut p = Parser::new(src)?;
    let s = p.sort()?;
    p.expect_eof()?;
    Ok(s)
}

#[derive(Debug, Clone)]
struct ClauseDef {
    params: Vec<Term>,
    body: Expr,
}

/// A parsed program with predicates ready for inlining.
#[derive(Debug, Clone, Default)]
pub struct Program {
    clauses: BTreeMap<String, Vec<ClauseDef>>,
    order: Vec<String>,
    goal: Option<Expr>,
    pub aliases: BTreeMap<String, Sort>,
}

impl Program {
    pub fn parse(src: &str) -> Result<Program, ProgramError> {
        Program::parse_with(src, &Program::default())
    }

    /// Parses `src` on top of the predicates and aliases of `base`.
    pub fn parse_with(src: &str, base: &Program) -> Result<Program, ProgramError> {
        let mut prog = base.clone();
        prog.goal = None;
        let mut p = Parser::new(src)?;
        p.aliases = prog.aliases.clone();
        while !p.at_eof() {
            match p.item()? {
                None => {}
                Some(Item::Clause {
                    name, params, body, ..
                }) => {
                    if !prog.clauses.contains_key(&name) {
                        prog.order.push(name.clone());
                    }
                    prog.clauses.entry(name).or_default().push(ClauseDef { params, body });
                }
                Some(Item::Goal(e)) => {
                    if prog.goal.is_some() {
                        return Err(ProgramError::MultipleGoals);
                    }
                    prog.goal = Some(e);
                }
            }
        }
        prog.aliases = p.aliases;
        Ok(prog)
    }

    /// Predicate names in definition order.
    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn has_goal(&self) -> bool {
        self.goal.is_some()
    }

    pub fn goal(&self) -> Result<Formula, ProgramError> {
        let e = self.goal.as_ref().ok_or(ProgramError::NoGoal)?;
        self.expand(e, &mut Vec::new(), &mut 0)
    }

    /// The body of a predicate with its own parameter names left free.
    pub fn predicate(&self, name: &str) -> Result<Formula, ProgramError> {
        let defs = self
            .clauses
            .get(name)
            .ok_or_else(|| ProgramError::UnknownGoal(name.to_string()))?;
        let mut acc = Formula::falsity();
        let mut counter = 0;
        for def in defs {
            let body = self.expand(&def.body, &mut vec![name.to_string()], &mut counter)?;
            acc = acc.or(&body);
        }
        Ok(acc)
    }

    /// Parameters of the first clause of a predicate.
    pub fn params(&self, name: &str) -> Option<&[Term]> {
        self.clauses.get(name).map(|d| d[0].params.as_slice())
    }

    fn expand(
        &self,
        e: &Expr,
        stack: &mut Vec<String>,
        counter: &mut usize,
    ) -> Result<Formula, ProgramError> {
        Ok(match e {
            Expr::True => Formula::truth(),
            Expr::False => Formula::falsity(),
            Expr::Atom(c) => Formula::conj(vec![c.clone()]),
            Expr::Dec(v, s) => Formula::truth().with_sort(v, s.clone()),
            Expr::And(xs) => {
                let mut acc = Formula::truth();
                for x in xs {
                    acc = acc.and(&self.expand(x, stack, counter)?);
                }
                acc
            }
            Expr::Or(xs) => {
                let mut acc = Formula::falsity();
                for x in xs {
                    acc = acc.or(&self.expand(x, stack, counter)?);
                }
                acc
            }
            Expr::Call { name, args, line, col } => {
                let defs = self
                    .clauses
                    .get(name)
                    .filter(|ds| ds.iter().any(|d| d.params.len() == args.len()))
                    .ok_or_else(|| ProgramError::UnknownPredicate {
                        name: name.clone(),
                        arity: args.len(),
                        line: *line,
                        col: *col,
                    })?;
                if stack.contains(name) {
                    return Err(ProgramError::Recursive(name.clone()));
                }
                stack.push(name.clone());
                let mut acc = Formula::falsity();
                for def in defs.iter().filter(|d| d.params.len() == args.len()) {
                    *counter += 1;
                    let k = *counter;
                    let body = self.expand(&def.body, stack, counter)?;
                    let mut locals = BTreeMap::new();
                    let mut rename = |v: &str| -> String {
                        locals
                            .entry(v.to_string())
                            .or_insert_with(|| format!("{v}_{k}"))
                            .clone()
                    };
                    let params: Vec<Term> = def.params.iter().map(|t| t.rename(&mut rename)).collect();
                    let body = body.rename(&mut rename);
                    let mut sub = BTreeMap::new();
                    let mut eqs = Vec::new();
                    for (p, a) in params.iter().zip(args) {
                        match p {
                            Term::Var(v) if !sub.contains_key(v) => {
                                sub.insert(v.clone(), a.clone());
                            }
                            _ => eqs.push(Constraint::eq(p.clone(), a.clone())),
                        }
                    }
                    let mut inlined = Formula::conj(eqs).and(&body);
                    let sorts = std::mem::take(&mut inlined.sorts);
                    inlined = inlined.substitute(&sub);
                    // Sorts declared on parameters carry over to variable arguments.
                    for (v, s) in sorts {
                        match sub.get(&v) {
                            Some(Term::Var(a)) => {
                                inlined.sorts.insert(a.clone(), s);
                            }
                            Some(_) => {}
                            None => {
                                inlined.sorts.insert(v, s);
                            }
                        }
                    }
                    acc = acc.or(&inlined);
                }
                stack.pop();
                acc
            }
        })
    }
}
