use std::fmt::Write;

use crate::formula::{Constraint, Formula, Kind, Sort, Term};
use crate::value::Value;

pub fn print_value(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v);
    s
}

fn write_list<T>(out: &mut String, open: &str, xs: impl IntoIterator<Item = T>, close: &str, mut f: impl FnMut(&mut String, T)) {
    out.push_str(open);
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        f(out, x);
    }
    out.push_str(close);
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Atom(a) => out.push_str(a.name()),
        Value::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Tuple(xs) => write_list(out, "[", xs, "]", write_value),
        Value::Set(xs) => write_list(out, "{", xs, "}", write_value),
        Value::Seq(xs) => write_list(out, "<", xs, ">", write_value),
        Value::Compound(f, xs) => write_list(out, &format!("{}(", f.name()), xs, ")", write_value),
    }
}

pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, t);
    s
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Lit(v) => write_value(out, v),
        Term::Var(x) => out.push_str(x),
        Term::Tuple(xs) => write_list(out, "[", xs, "]", write_term),
        Term::SeqExt(xs) => write_list(out, "<", xs, ">", write_term),
        Term::Compound(f, xs) => write_list(out, &format!("{}(", f.name()), xs, ")", write_term),
        Term::SetExt { elems, tail } => {
            out.push('{');
            for (i, x) in elems.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_term(out, x);
            }
            if let Some(t) = tail {
                out.push_str(" / ");
                write_term(out, t);
            }
            out.push('}');
        }
        Term::Record { fields, rest } => {
            out.push('{');
            for (i, (f, x)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "[{},", f.name());
                write_term(out, x);
                out.push(']');
            }
            if let Some(t) = rest {
                out.push_str(" / ");
                write_term(out, t);
            }
            out.push('}');
        }
        Term::Ris(r) => {
            let _ = write!(out, "ris({} in ", r.binder);
            write_term(out, &r.domain);
            out.push_str(", [], ");
            out.push_str(&print_formula(&r.filter));
            out.push_str(", ");
            write_term(out, &r.pattern);
            out.push(')');
        }
    }
}

pub fn print_constraint(c: &Constraint) -> String {
    let infix = match c.kind {
        Kind::Eq => Some("="),
        Kind::Neq => Some("neq"),
        Kind::In => Some("in"),
        Kind::Nin => Some("nin"),
        _ => None,
    };
    match infix {
        Some(op) => format!("{} {op} {}", print_term(&c.args[0]), print_term(&c.args[1])),
        None => {
            let args: Vec<String> = c.args.iter().map(print_term).collect();
            format!("{}({})", c.kind.name(), args.join(","))
        }
    }
}

pub fn print_sort(s: &Sort) -> String {
    let join = |xs: &[Sort]| xs.iter().map(print_sort).collect::<Vec<_>>().join(",");
    match s {
        Sort::Int => "int".into(),
        Sort::Atoms(ns) => ns.keyword().into(),
        Sort::Enum(xs) => format!(
            "enum({})",
            xs.iter().map(|a| a.name().to_string()).collect::<Vec<_>>().join(",")
        ),
        Sort::Set(e) => match &**e {
            Sort::Tuple(xy) if xy.len() == 2 => format!("rel({},{})", print_sort(&xy[0]), print_sort(&xy[1])),
            e => format!("set({})", print_sort(e)),
        },
        Sort::Seq(e) => format!("seq({})", print_sort(e)),
        Sort::Tuple(xs) => format!("[{}]", join(xs)),
        Sort::Record(fs) => format!(
            "{{{}}}",
            fs.iter()
                .map(|(f, s)| format!("[{},{}]", f.name(), print_sort(s)))
                .collect::<Vec<_>>()
                .join(",")
        ),
        Sort::Ctor(f, xs) if xs.is_empty() => format!("ctor({})", f.name()),
        Sort::Ctor(f, xs) => format!("ctor({},{})", f.name(), join(xs)),
        Sort::Union(xs) => format!("union({})", join(xs)),
    }
}

fn print_conj(c: &[Constraint]) -> String {
    if c.is_empty() {
        "true".into()
    } else {
        c.iter().map(print_constraint).collect::<Vec<_>>().join(" & ")
    }
}

/// Canonical text of a formula: declarations first, then the body.
pub fn print_formula(f: &Formula) -> String {
    let mut parts: Vec<String> = f
        .sorts
        .iter()
        .map(|(v, s)| format!("dec({v},{})", print_sort(s)))
        .collect();
    let body = match f.clauses.len() {
        0 => "false".to_string(),
        1 => print_conj(&f.clauses[0]),
        _ => format!(
            "({})",
            f.clauses.iter().map(|c| print_conj(c)).collect::<Vec<_>>().join(" or ")
        ),
    };
    if parts.is_empty() || body != "true" {
        parts.push(body);
    }
    parts.join(" & ")
}
