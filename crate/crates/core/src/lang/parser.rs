use std::collections::{BTreeMap, BTreeSet};

use crate::formula::{Constraint, Formula, Kind, Ris, Sort, Term};
use crate::value::{Atom, Namespace, Value};

use super::lexer::{tokenize, Spanned, Tok};
use super::ParseError;

/// Formula syntax before predicate calls are inlined.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    True,
    False,
    Atom(Constraint),
    Dec(String, Sort),
    Call { name: String, args: Vec<Term>, line: usize, col: usize },
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Clause {
        name: String,
        params: Vec<Term>,
        body: Expr,
        line: usize,
    },
    Goal(Expr),
}

pub struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    anon: usize,
    pub aliases: BTreeMap<String, Sort>,
}

const INFIX: [(&str, Kind); 3] = [("neq", Kind::Neq), ("in", Kind::In), ("nin", Kind::Nin)];

impl Parser {
    pub fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
            anon: 0,
            aliases: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
            found: t.tok.describe(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!("expected {}", tok.describe())))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == word) {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn expect_eof(&self) -> Result<(), ParseError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    fn anon_var(&mut self) -> Term {
        self.anon += 1;
        Term::Var(format!("_G{}", self.anon))
    }

    // ---- programs ----

    /// Parses one `.`-terminated item. Sort aliases are absorbed and yield
    /// `None`.
    pub fn item(&mut self) -> Result<Option<Item>, ParseError> {
        if matches!(self.peek(), Tok::Ident(s) if s == "sort") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.advance();
            let Tok::Ident(name) = self.advance() else { unreachable!() };
            self.expect(Tok::Eq)?;
            let sort = self.sort()?;
            self.expect(Tok::Dot)?;
            self.aliases.insert(name, sort);
            return Ok(None);
        }
        let (line, _) = self.here();
        if let (Tok::Ident(name), next) = (self.peek().clone(), self.peek_at(1).clone()) {
            let head_with_args = next == Tok::LParen && Kind::from_name(&name).is_none() && !is_reserved(&name);
            if next == Tok::Neck || head_with_args {
                let save = self.pos;
                self.advance();
                let params = if self.eat(&Tok::LParen) {
                    self.terms_until(Tok::RParen)?
                } else {
                    vec![]
                };
                if self.eat(&Tok::Neck) {
                    let body = self.formula()?;
                    self.expect(Tok::Dot)?;
                    return Ok(Some(Item::Clause { name, params, body, line }));
                }
                if self.eat(&Tok::Dot) {
                    return Ok(Some(Item::Clause {
                        name,
                        params,
                        body: Expr::True,
                        line,
                    }));
                }
                self.pos = save;
            }
        }
        let goal = self.formula()?;
        self.expect(Tok::Dot)?;
        Ok(Some(Item::Goal(goal)))
    }

    // ---- formulas ----

    pub fn formula(&mut self) -> Result<Expr, ParseError> {
        let mut parts = vec![self.literal()?];
        while self.eat(&Tok::Amp) {
            parts.push(self.literal()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Expr::And(parts)
        })
    }

    fn literal(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::LParen) {
            let mut alts = vec![self.formula()?];
            while self.eat_ident("or") {
                alts.push(self.formula()?);
            }
            self.expect(Tok::RParen)?;
            return Ok(if alts.len() == 1 {
                alts.pop().unwrap()
            } else {
                Expr::Or(alts)
            });
        }
        let (line, col) = self.here();
        if let Tok::Ident(name) = self.peek().clone() {
            match name.as_str() {
                "true" if !matches!(self.peek_at(1), Tok::LParen) => {
                    self.advance();
                    return Ok(Expr::True);
                }
                "false" if !matches!(self.peek_at(1), Tok::LParen) => {
                    self.advance();
                    return Ok(Expr::False);
                }
                "dec" if *self.peek_at(1) == Tok::LParen => {
                    self.advance();
                    self.advance();
                    let v = match self.advance() {
                        Tok::Var(v) => v,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("expected a variable in `dec`"));
                        }
                    };
                    self.expect(Tok::Comma)?;
                    let s = self.sort()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Dec(v, s));
                }
                "ris" => {}
                _ if *self.peek_at(1) == Tok::LParen => {
                    let save = self.pos;
                    self.advance();
                    self.advance();
                    let args = self.terms_until(Tok::RParen)?;
                    if self.infix_ahead() {
                        self.pos = save;
                    } else if let Some(kind) = Kind::from_name(&name) {
                        if kind.arity() != args.len() {
                            self.pos = save;
                            return Err(self.error(format!(
                                "`{name}` takes {} arguments, not {}",
                                kind.arity(),
                                args.len()
                            )));
                        }
                        return Ok(Expr::Atom(Constraint::new(kind, args)));
                    } else {
                        return Ok(Expr::Call { name, args, line, col });
                    }
                }
                _ if !self.infix_ahead_at(1) => {
                    self.advance();
                    return Ok(Expr::Call {
                        name,
                        args: vec![],
                        line,
                        col,
                    });
                }
                _ => {}
            }
        }
        let lhs = self.term()?;
        let kind = if self.eat(&Tok::Eq) {
            Kind::Eq
        } else if let Some((_, k)) = INFIX.iter().find(|(w, _)| matches!(self.peek(), Tok::Ident(s) if s == w)) {
            self.advance();
            *k
        } else {
            return Err(self.error("expected `=`, `neq`, `in` or `nin`"));
        };
        let rhs = self.term()?;
        Ok(Expr::Atom(Constraint::new(kind, vec![lhs, rhs])))
    }

    fn infix_ahead(&self) -> bool {
        self.infix_ahead_at(0)
    }

    fn infix_ahead_at(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Tok::Eq => true,
            Tok::Ident(s) => INFIX.iter().any(|(w, _)| w == s),
            _ => false,
        }
    }

    // ---- terms ----

    fn terms_until(&mut self, close: Tok) -> Result<Vec<Term>, ParseError> {
        let mut out = Vec::new();
        if self.eat(&close) {
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            if self.eat(&close) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    pub fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Term::Lit(Value::Int(n)))
            }
            Tok::Var(v) => {
                self.advance();
                Ok(Term::Var(v))
            }
            Tok::Underscore => {
                self.advance();
                Ok(self.anon_var())
            }
            Tok::Ident(name) => {
                self.advance();
                if name == "ris" && *self.peek() == Tok::LParen {
                    return self.ris();
                }
                if self.eat(&Tok::LParen) {
                    let args = self.terms_until(Tok::RParen)?;
                    return Ok(Term::Compound(Atom::new(&name), args).normalize());
                }
                Ok(Term::Lit(Value::atom(&name)))
            }
            Tok::LBracket => {
                self.advance();
                let elems = self.terms_until(Tok::RBracket)?;
                if elems.len() < 2 {
                    self.pos -= 1;
                    return Err(self.error("tuples need at least two components"));
                }
                Ok(Term::tuple(elems))
            }
            Tok::Lt => {
                self.advance();
                let elems = self.terms_until(Tok::Gt)?;
                Ok(Term::SeqExt(elems).normalize())
            }
            Tok::LBrace => {
                self.advance();
                let mut elems = Vec::new();
                let mut tail = None;
                if !self.eat(&Tok::RBrace) {
                    loop {
                        if self.eat(&Tok::Slash) {
                            tail = Some(self.term()?);
                            self.expect(Tok::RBrace)?;
                            break;
                        }
                        elems.push(self.term()?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        if *self.peek() != Tok::Slash {
                            self.expect(Tok::Comma)?;
                        }
                    }
                }
                Ok(set_term(elems, tail))
            }
            _ => Err(self.error("expected a term")),
        }
    }

    fn ris(&mut self) -> Result<Term, ParseError> {
        self.expect(Tok::LParen)?;
        let binder = match self.advance() {
            Tok::Var(v) => v,
            _ => {
                self.pos -= 1;
                return Err(self.error("expected the RIS control variable"));
            }
        };
        if !self.eat_ident("in") {
            return Err(self.error("expected `in`"));
        }
        let domain = self.term()?;
        self.expect(Tok::Comma)?;
        self.expect(Tok::LBracket)?;
        self.expect(Tok::RBracket)?;
        self.expect(Tok::Comma)?;
        let filter = self.formula()?;
        self.expect(Tok::Comma)?;
        let pattern = self.term()?;
        if self.eat(&Tok::Comma) && !self.eat_ident("true") {
            return Err(self.error("expected `true` as the fifth RIS argument"));
        }
        self.expect(Tok::RParen)?;
        let filter = plain_formula(filter).map_err(|_| self.error("RIS filters cannot call predicates"))?;
        Ok(Term::Ris(Box::new(Ris {
            binder,
            domain,
            filter,
            pattern,
        }))
        .normalize())
    }

    // ---- sorts ----

    pub fn sort(&mut self) -> Result<Sort, ParseError> {
        match self.peek().clone() {
            Tok::LBracket => {
                self.advance();
                let mut parts = vec![self.sort()?];
                while self.eat(&Tok::Comma) {
                    parts.push(self.sort()?);
                }
                self.expect(Tok::RBracket)?;
                if parts.len() < 2 {
                    return Err(self.error("tuple sorts need at least two components"));
                }
                Ok(Sort::Tuple(parts))
            }
            Tok::LBrace => {
                self.advance();
                let mut fields: Vec<(Atom, Sort)> = Vec::new();
                loop {
                    self.expect(Tok::LBracket)?;
                    let f = match self.advance() {
                        Tok::Ident(f) => f,
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("expected a field name"));
                        }
                    };
                    self.expect(Tok::Comma)?;
                    let s = self.sort()?;
                    self.expect(Tok::RBracket)?;
                    if fields.iter().any(|(g, _)| g.name() == f) {
                        return Err(self.error(format!("duplicate field `{f}`")));
                    }
                    fields.push((Atom::with_ns(&f, Namespace::Field), s));
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    self.expect(Tok::Comma)?;
                }
                fields.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Sort::Record(fields))
            }
            Tok::Ident(name) => {
                self.advance();
                if name == "int" {
                    return Ok(Sort::Int);
                }
                if let Some(ns) = Namespace::from_keyword(&name) {
                    return Ok(Sort::Atoms(ns));
                }
                if let Some(s) = self.aliases.get(&name) {
                    return Ok(s.clone());
                }
                if !self.eat(&Tok::LParen) {
                    return Err(self.error_at_prev(format!("unknown sort `{name}`")));
                }
                let sort = match name.as_str() {
                    "set" => Sort::Set(Box::new(self.sort()?)),
                    "seq" => Sort::Seq(Box::new(self.sort()?)),
                    "rel" => {
                        let a = self.sort()?;
                        self.expect(Tok::Comma)?;
                        Sort::rel(a, self.sort()?)
                    }
                    "enum" => {
                        let mut atoms = vec![self.atom_name()?];
                        while self.eat(&Tok::Comma) {
                            atoms.push(self.atom_name()?);
                        }
                        Sort::Enum(atoms)
                    }
                    "ctor" => {
                        let f = self.atom_name()?;
                        let mut parts = Vec::new();
                        while self.eat(&Tok::Comma) {
                            parts.push(self.sort()?);
                        }
                        Sort::Ctor(f, parts)
                    }
                    "union" => {
                        let mut parts = vec![self.sort()?];
                        while self.eat(&Tok::Comma) {
                            parts.push(self.sort()?);
                        }
                        Sort::Union(parts)
                    }
                    _ => return Err(self.error_at_prev(format!("unknown sort constructor `{name}`"))),
                };
                self.expect(Tok::RParen)?;
                Ok(sort)
            }
            _ => Err(self.error("expected a sort")),
        }
    }

    fn atom_name(&mut self) -> Result<Atom, ParseError> {
        match self.advance() {
            Tok::Ident(a) => Ok(Atom::new(a)),
            _ => {
                self.pos -= 1;
                Err(self.error("expected an atom"))
            }
        }
    }

    fn error_at_prev(&self, msg: String) -> ParseError {
        let t = &self.toks[self.pos.saturating_sub(1)];
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            msg,
            found: t.tok.describe(),
        }
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "dec" | "ris" | "true" | "false" | "sort")
}

/// Builds a set term: atom-keyed pairs with distinct keys read as a record
/// pattern, anything else as a set extension.
fn set_term(elems: Vec<Term>, tail: Option<Term>) -> Term {
    let keys: Option<Vec<Atom>> = elems
        .iter()
        .map(|e| match e {
            Term::Tuple(xy) if xy.len() == 2 => xy[0].as_value().and_then(Value::as_atom).cloned(),
            Term::Lit(Value::Tuple(xy)) if xy.len() == 2 => xy[0].as_atom().cloned(),
            _ => None,
        })
        .collect();
    if let Some(keys) = keys {
        let distinct: BTreeSet<&Atom> = keys.iter().collect();
        if !keys.is_empty() && distinct.len() == keys.len() {
            let fields = keys
                .into_iter()
                .zip(elems)
                .map(|(k, e)| match e {
                    Term::Tuple(mut xy) => (k.tagged(Namespace::Field), xy.pop().unwrap()),
                    Term::Lit(Value::Tuple(mut xy)) => (k.tagged(Namespace::Field), Term::Lit(xy.pop().unwrap())),
                    _ => unreachable!(),
                })
                .collect();
            return Term::Record {
                fields,
                rest: tail.map(Box::new),
            }
            .normalize();
        }
    }
    Term::SetExt {
        elems,
        tail: tail.map(Box::new),
    }
    .normalize()
}

/// Converts call-free syntax to a formula.
pub fn plain_formula(e: Expr) -> Result<Formula, String> {
    Ok(match e {
        Expr::True => Formula::truth(),
        Expr::False => Formula::falsity(),
        Expr::Atom(c) => Formula::conj(vec![c]),
        Expr::Dec(v, s) => Formula::truth().with_sort(&v, s),
        Expr::Call { name, .. } => return Err(name),
        Expr::And(xs) => {
            let mut acc = Formula::truth();
            for x in xs {
                acc = acc.and(&plain_formula(x)?);
            }
            acc
        }
        Expr::Or(xs) => {
            let mut acc = Formula::falsity();
            for x in xs {
                acc = acc.or(&plain_formula(x)?);
            }
            acc
        }
    })
}
