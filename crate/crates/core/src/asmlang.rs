//! ASM-lite: abstract syntax, parser, printer and static checks.
//!
//! ```text
//! atoms a, b;
//! functions g/2;
//! terms t, p;
//! do
//!   if t != p then t := g(t, p)
//! ```
//!
//! Terms: `{}`, `{t}`, `{t1, t2}` (sugar for `{t1} U {t2}`), `t U p`,
//! `<t, p>`, `f(t1, .., tk)`, `(t)`. Conditions: `t in p`, `t = p`,
//! `t != p`, `not`, `and`, `or`. Statements: `lhs := t`,
//! `if c then s [else s]`, `let x = t in s`, `let x = choose(t) in s`,
//! `par { s; s; .. }`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Critical term.
    Crit(String),
    /// Let-bound variable.
    Local(String),
    Empty,
    Singleton(Box<Term>),
    Union(Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    App(String, Vec<Term>),
}

impl Term {
    pub fn singleton(t: Term) -> Term {
        Term::Singleton(Box::new(t))
    }

    pub fn union(a: Term, b: Term) -> Term {
        Term::Union(Box::new(a), Box::new(b))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    pub fn crit(name: &str) -> Term {
        Term::Crit(name.to_string())
    }

    /// Number of constructor nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Crit(_) | Term::Local(_) | Term::Empty => 1,
            Term::Singleton(t) => 1 + t.size(),
            Term::Union(a, b) | Term::Pair(a, b) => 1 + a.size() + b.size(),
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    In(Term, Term),
    Eq(Term, Term),
    Ne(Term, Term),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Lhs {
    Crit(String),
    Loc(String, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(Lhs, Term),
    If(Cond, Box<Stmt>, Option<Box<Stmt>>),
    Let(String, Term, Box<Stmt>),
    LetChoose(String, Term, Box<Stmt>),
    Par(Vec<Stmt>),
}

impl Stmt {
    pub fn count(&self) -> usize {
        match self {
            Stmt::Assign(..) => 1,
            Stmt::If(_, a, b) => 1 + a.count() + b.as_ref().map_or(0, |b| b.count()),
            Stmt::Let(_, _, s) | Stmt::LetChoose(_, _, s) => 1 + s.count(),
            Stmt::Par(v) => 1 + v.iter().map(Stmt::count).sum::<usize>(),
        }
    }

    pub fn has_choose(&self) -> bool {
        match self {
            Stmt::Assign(..) => false,
            Stmt::If(_, a, b) => a.has_choose() || b.as_ref().is_some_and(|b| b.has_choose()),
            Stmt::Let(_, _, s) => s.has_choose(),
            Stmt::LetChoose(..) => true,
            Stmt::Par(v) => v.iter().any(Stmt::has_choose),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub atoms: Vec<String>,
    pub functions: Vec<(String, usize)>,
    pub terms: Vec<String>,
    pub body: Stmt,
}

impl Program {
    pub fn arity(&self, f: &str) -> Option<usize> {
        self.functions.iter().find(|(g, _)| g == f).map(|(_, k)| *k)
    }
}

pub const MAX_ARITY: usize = 3;

const KEYWORDS: &[&str] = &[
    "atoms", "functions", "terms", "do", "if", "then", "else", "let", "in", "par", "choose",
    "not", "and", "or", "U",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        line: usize,
        col: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{col}: undeclared name {name}")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {name} expects {expected} arguments, got {got}")]
    Arity {
        line: usize,
        col: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("{line}:{col}: {msg}")]
    Declaration { line: usize, col: usize, msg: String },
}

impl ParseError {
    fn pos(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. }
            | ParseError::Undeclared { line, col, .. }
            | ParseError::Arity { line, col, .. }
            | ParseError::Declaration { line, col, .. } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(usize),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const SYMS: &[&str] = &[":=", "!=", "{", "}", "(", ")", "<", ">", ",", ";", "=", "/"];

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let b = src.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c == b'\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == b'#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = (line, col);
        if c.is_ascii_alphabetic() || c == b'_' {
            let j = i + b[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric() || **c == b'_')
                .count();
            out.push((Tok::Ident(src[i..j].to_string()), start.0, start.1));
            col += j - i;
            i = j;
        } else if c.is_ascii_digit() {
            let j = i + b[i..].iter().take_while(|c| c.is_ascii_digit()).count();
            let n = src[i..j].parse().map_err(|_| ParseError::Syntax {
                line,
                col,
                expected: vec!["small number".into()],
                found: src[i..j].to_string(),
            })?;
            out.push((Tok::Num(n), start.0, start.1));
            col += j - i;
            i = j;
        } else if let Some(s) = SYMS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push((Tok::Sym(s), start.0, start.1));
            col += s.len();
            i += s.len();
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                line,
                col,
                expected: vec!["token".into()],
                found: format!("`{ch}`"),
            });
        }
    }
    out.push((Tok::Eof, line, col));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    terms: BTreeSet<String>,
    functions: BTreeMap<String, usize>,
    atoms: BTreeSet<String>,
    scope: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn here(&self) -> (usize, usize) {
        let (_, l, c) = &self.toks[self.pos];
        (*l, *c)
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        let hit = self.is_kw(k);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&[&format!("`{s}`")])
        }
    }

    fn kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.fail(&[&format!("`{k}`")])
        }
    }

    fn name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(&["name"]),
        }
    }

    fn declared(&self) -> impl Iterator<Item = &String> {
        self.terms
            .iter()
            .chain(self.functions.keys())
            .chain(&self.atoms)
    }

    fn fresh(&self, name: &str, at: (usize, usize)) -> PResult<()> {
        if self.declared().any(|d| d == name) || self.scope.iter().any(|s| s == name) {
            return Err(ParseError::Declaration {
                line: at.0,
                col: at.1,
                msg: format!("{name} is already declared"),
            });
        }
        Ok(())
    }

    fn program(&mut self) -> PResult<Program> {
        let mut atoms = Vec::new();
        let mut functions = Vec::new();
        let mut terms = Vec::new();
        loop {
            if self.eat_kw("atoms") {
                loop {
                    let at = self.here();
                    let a = self.name()?;
                    self.fresh(&a, at)?;
                    self.atoms.insert(a.clone());
                    atoms.push(a);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.sym(";")?;
            } else if self.eat_kw("functions") {
                loop {
                    let at = self.here();
                    let f = self.name()?;
                    self.fresh(&f, at)?;
                    self.sym("/")?;
                    let k = match *self.peek() {
                        Tok::Num(k) => k,
                        _ => return self.fail(&["arity"]),
                    };
                    if !(1..=MAX_ARITY).contains(&k) {
                        return Err(ParseError::Declaration {
                            line: at.0,
                            col: at.1,
                            msg: format!("arity of {f} must be between 1 and {MAX_ARITY}"),
                        });
                    }
                    self.pos += 1;
                    self.functions.insert(f.clone(), k);
                    functions.push((f, k));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.sym(";")?;
            } else if self.eat_kw("terms") {
                loop {
                    let at = self.here();
                    let t = self.name()?;
                    self.fresh(&t, at)?;
                    self.terms.insert(t.clone());
                    terms.push(t);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.sym(";")?;
            } else if self.eat_kw("do") {
                break;
            } else {
                return self.fail(&["`atoms`", "`functions`", "`terms`", "`do`"]);
            }
        }
        let body = self.stmt()?;
        if *self.peek() != Tok::Eof {
            return self.fail(&["end of input"]);
        }
        Ok(Program {
            atoms,
            functions,
            terms,
            body,
        })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        // `{ s }` only groups
        if self.eat_sym("{") {
            let s = self.stmt()?;
            self.sym("}")?;
            return Ok(s);
        }
        if self.eat_kw("if") {
            let c = self.cond()?;
            self.kw("then")?;
            let a = self.stmt()?;
            let b = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If(c, Box::new(a), b));
        }
        if self.eat_kw("let") {
            let at = self.here();
            let x = self.name()?;
            self.fresh(&x, at)?;
            self.sym("=")?;
            let choose = self.eat_kw("choose");
            let t = if choose {
                self.sym("(")?;
                let t = self.term()?;
                self.sym(")")?;
                t
            } else {
                self.term()?
            };
            self.kw("in")?;
            self.scope.push(x.clone());
            let body = self.stmt();
            self.scope.pop();
            let body = Box::new(body?);
            return Ok(if choose {
                Stmt::LetChoose(x, t, body)
            } else {
                Stmt::Let(x, t, body)
            });
        }
        if self.eat_kw("par") {
            self.sym("{")?;
            let mut v = Vec::new();
            if !self.eat_sym("}") {
                loop {
                    v.push(self.stmt()?);
                    if self.eat_sym("}") {
                        break;
                    }
                    if !self.eat_sym(";") {
                        return self.fail(&["`;`", "`}`"]);
                    }
                }
            }
            return Ok(Stmt::Par(v));
        }
        let at = self.here();
        let name = match self.name() {
            Ok(n) => n,
            Err(_) => return self.fail(&["statement"]),
        };
        let lhs = if let Some(&k) = self.functions.get(&name) {
            Lhs::Loc(name.clone(), self.args(&name, k, at)?)
        } else if self.terms.contains(&name) {
            Lhs::Crit(name)
        } else if self.scope.contains(&name) {
            return Err(ParseError::Declaration {
                line: at.0,
                col: at.1,
                msg: format!("cannot assign to let variable {name}"),
            });
        } else {
            return Err(ParseError::Undeclared {
                line: at.0,
                col: at.1,
                name,
            });
        };
        self.sym(":=")?;
        Ok(Stmt::Assign(lhs, self.term()?))
    }

    fn args(&mut self, f: &str, k: usize, at: (usize, usize)) -> PResult<Vec<Term>> {
        self.sym("(")?;
        let mut args = vec![self.term()?];
        while self.eat_sym(",") {
            args.push(self.term()?);
        }
        self.sym(")")?;
        if args.len() != k {
            return Err(ParseError::Arity {
                line: at.0,
                col: at.1,
                name: f.to_string(),
                expected: k,
                got: args.len(),
            });
        }
        Ok(args)
    }

    fn cond(&mut self) -> PResult<Cond> {
        let mut c = self.conj()?;
        while self.eat_kw("or") {
            c = Cond::Or(Box::new(c), Box::new(self.conj()?));
        }
        Ok(c)
    }

    fn conj(&mut self) -> PResult<Cond> {
        let mut c = self.cond_atom()?;
        while self.eat_kw("and") {
            c = Cond::And(Box::new(c), Box::new(self.cond_atom()?));
        }
        Ok(c)
    }

    fn cond_atom(&mut self) -> PResult<Cond> {
        if self.eat_kw("not") {
            return Ok(Cond::Not(Box::new(self.cond_atom()?)));
        }
        if self.is_sym("(") {
            // `(` opens either a grouped condition or a grouped term
            let save = self.pos;
            self.pos += 1;
            let grouped = self.cond().and_then(|c| self.sym(")").map(|_| c));
            match grouped {
                Ok(c) => return Ok(c),
                Err(e1) => {
                    self.pos = save;
                    return self.comparison().map_err(|e2| {
                        if e1.pos() > e2.pos() {
                            e1
                        } else {
                            e2
                        }
                    });
                }
            }
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Cond> {
        let a = self.term()?;
        if self.eat_kw("in") {
            Ok(Cond::In(a, self.term()?))
        } else if self.eat_sym("=") {
            Ok(Cond::Eq(a, self.term()?))
        } else if self.eat_sym("!=") {
            Ok(Cond::Ne(a, self.term()?))
        } else {
            self.fail(&["`in`", "`=`", "`!=`", "`U`"])
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let mut t = self.term_atom()?;
        while self.eat_kw("U") {
            t = Term::union(t, self.term_atom()?);
        }
        Ok(t)
    }

    fn term_atom(&mut self) -> PResult<Term> {
        if self.eat_sym("{") {
            if self.eat_sym("}") {
                return Ok(Term::Empty);
            }
            let mut t = Term::singleton(self.term()?);
            while self.eat_sym(",") {
                t = Term::union(t, Term::singleton(self.term()?));
            }
            self.sym("}")?;
            return Ok(t);
        }
        if self.eat_sym("<") {
            let a = self.term()?;
            self.sym(",")?;
            let b = self.term()?;
            self.sym(">")?;
            return Ok(Term::pair(a, b));
        }
        if self.eat_sym("(") {
            let t = self.term()?;
            self.sym(")")?;
            return Ok(t);
        }
        let at = self.here();
        let name = match self.name() {
            Ok(n) => n,
            Err(_) => return self.fail(&["term"]),
        };
        if self.scope.contains(&name) {
            Ok(Term::Local(name))
        } else if self.terms.contains(&name) {
            Ok(Term::Crit(name))
        } else if let Some(&k) = self.functions.get(&name) {
            let args = self.args(&name, k, at)?;
            Ok(Term::App(name, args))
        } else if self.atoms.contains(&name) {
            Err(ParseError::Declaration {
                line: at.0,
                col: at.1,
                msg: format!("atom {name} cannot be used as a constant"),
            })
        } else {
            Err(ParseError::Undeclared {
                line: at.0,
                col: at.1,
                name,
            })
        }
    }
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        terms: BTreeSet::new(),
        functions: BTreeMap::new(),
        atoms: BTreeSet::new(),
        scope: Vec::new(),
    };
    p.program()
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Crit(n) | Term::Local(n) => f.write_str(n),
            Term::Empty => f.write_str("{}"),
            Term::Singleton(t) => write!(f, "{{{t}}}"),
            Term::Union(a, b) => match **b {
                Term::Union(..) => write!(f, "{a} U ({b})"),
                _ => write!(f, "{a} U {b}"),
            },
            Term::Pair(a, b) => write!(f, "<{a}, {b}>"),
            Term::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Cond {
    fn prec(&self) -> u8 {
        match self {
            Cond::Or(..) => 0,
            Cond::And(..) => 1,
            Cond::Not(_) => 2,
            _ => 3,
        }
    }
}

fn cond_at(c: &Cond, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.prec() < min {
        write!(f, "({c})")
    } else {
        write!(f, "{c}")
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::In(a, b) => write!(f, "{a} in {b}"),
            Cond::Eq(a, b) => write!(f, "{a} = {b}"),
            Cond::Ne(a, b) => write!(f, "{a} != {b}"),
            Cond::Not(c) => {
                f.write_str("not ")?;
                cond_at(c, 2, f)
            }
            Cond::And(a, b) => {
                cond_at(a, 1, f)?;
                f.write_str(" and ")?;
                cond_at(b, 2, f)
            }
            Cond::Or(a, b) => {
                cond_at(a, 0, f)?;
                f.write_str(" or ")?;
                cond_at(b, 1, f)
            }
        }
    }
}

impl fmt::Display for Lhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lhs::Crit(n) => f.write_str(n),
            Lhs::Loc(g, args) => write!(f, "{}", Term::App(g.clone(), args.clone())),
        }
    }
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Assign(l, t) => {
            let _ = write!(out, "{pad}{l} := {t}");
        }
        Stmt::If(c, a, b) => {
            let _ = writeln!(out, "{pad}if {c} then");
            // an inner if or let would capture the else
            let guard = b.is_some() && matches!(**a, Stmt::If(..) | Stmt::Let(..) | Stmt::LetChoose(..));
            if guard {
                let _ = writeln!(out, "{pad}  {{");
                write_stmt(out, a, indent + 2);
                let _ = write!(out, "\n{pad}  }}");
            } else {
                write_stmt(out, a, indent + 1);
            }
            if let Some(b) = b {
                let _ = writeln!(out, "\n{pad}else");
                write_stmt(out, b, indent + 1);
            }
        }
        Stmt::Let(x, t, body) => {
            let _ = writeln!(out, "{pad}let {x} = {t} in");
            write_stmt(out, body, indent + 1);
        }
        Stmt::LetChoose(x, t, body) => {
            let _ = writeln!(out, "{pad}let {x} = choose({t}) in");
            write_stmt(out, body, indent + 1);
        }
        Stmt::Par(v) => {
            let _ = write!(out, "{pad}par {{");
            for (i, s) in v.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ";\n" });
                write_stmt(out, s, indent + 1);
            }
            let _ = write!(out, "\n{pad}}}");
        }
    }
}

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    if !p.atoms.is_empty() {
        let _ = writeln!(out, "atoms {};", p.atoms.join(", "));
    }
    if !p.functions.is_empty() {
        let fs: Vec<String> = p.functions.iter().map(|(f, k)| format!("{f}/{k}")).collect();
        let _ = writeln!(out, "functions {};", fs.join(", "));
    }
    if !p.terms.is_empty() {
        let _ = writeln!(out, "terms {};", p.terms.join(", "));
    }
    out.push_str("do\n");
    write_stmt(&mut out, &p.body, 1);
    out.push('\n');
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramViolation {
    #[error("conflicting parallel assignment to {0}")]
    ParallelConflict(String),
    #[error("undeclared name {0}")]
    Undeclared(String),
    #[error("duplicate declaration of {0}")]
    Duplicate(String),
    #[error("{name} expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("let variable {0} shadows another name")]
    Shadow(String),
}

/// Static checks on an AST, including ones the parser enforces for text
/// input (ASTs may also be built directly).
pub fn validate(p: &Program) -> Vec<ProgramViolation> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    let all = p
        .atoms
        .iter()
        .chain(p.functions.iter().map(|(f, _)| f))
        .chain(&p.terms);
    for n in all {
        if !names.insert(n.clone()) {
            out.push(ProgramViolation::Duplicate(n.clone()));
        }
    }
    for (f, k) in &p.functions {
        if !(1..=MAX_ARITY).contains(k) {
            out.push(ProgramViolation::Arity {
                name: f.clone(),
                expected: MAX_ARITY,
                got: *k,
            });
        }
    }
    let mut scope = Vec::new();
    check_stmt(p, &p.body, &names, &mut scope, &mut out);
    out
}

fn check_term(p: &Program, t: &Term, scope: &[String], out: &mut Vec<ProgramViolation>) {
    match t {
        Term::Crit(n) => {
            if !p.terms.contains(n) {
                out.push(ProgramViolation::Undeclared(n.clone()));
            }
        }
        Term::Local(n) => {
            if !scope.contains(n) {
                out.push(ProgramViolation::Undeclared(n.clone()));
            }
        }
        Term::Empty => {}
        Term::Singleton(a) => check_term(p, a, scope, out),
        Term::Union(a, b) | Term::Pair(a, b) => {
            check_term(p, a, scope, out);
            check_term(p, b, scope, out);
        }
        Term::App(f, args) => {
            check_app(p, f, args.len(), out);
            args.iter().for_each(|a| check_term(p, a, scope, out));
        }
    }
}

fn check_app(p: &Program, f: &str, got: usize, out: &mut Vec<ProgramViolation>) {
    match p.arity(f) {
        None => out.push(ProgramViolation::Undeclared(f.to_string())),
        Some(k) if k != got => out.push(ProgramViolation::Arity {
            name: f.to_string(),
            expected: k,
            got,
        }),
        Some(_) => {}
    }
}

fn check_cond(p: &Program, c: &Cond, scope: &[String], out: &mut Vec<ProgramViolation>) {
    match c {
        Cond::In(a, b) | Cond::Eq(a, b) | Cond::Ne(a, b) => {
            check_term(p, a, scope, out);
            check_term(p, b, scope, out);
        }
        Cond::Not(c) => check_cond(p, c, scope, out),
        Cond::And(a, b) | Cond::Or(a, b) => {
            check_cond(p, a, scope, out);
            check_cond(p, b, scope, out);
        }
    }
}

/// Critical terms a statement may assign.
pub fn assigned_terms(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(s: &Stmt, out: &mut BTreeSet<String>) {
        match s {
            Stmt::Assign(Lhs::Crit(t), _) => {
                out.insert(t.clone());
            }
            Stmt::Assign(..) => {}
            Stmt::If(_, a, b) => {
                go(a, out);
                if let Some(b) = b {
                    go(b, out);
                }
            }
            Stmt::Let(_, _, s) | Stmt::LetChoose(_, _, s) => go(s, out),
            Stmt::Par(v) => v.iter().for_each(|s| go(s, out)),
        }
    }
    go(s, &mut out);
    out
}

fn check_stmt(
    p: &Program,
    s: &Stmt,
    names: &BTreeSet<String>,
    scope: &mut Vec<String>,
    out: &mut Vec<ProgramViolation>,
) {
    match s {
        Stmt::Assign(lhs, t) => {
            match lhs {
                Lhs::Crit(n) => {
                    if !p.terms.contains(n) {
                        out.push(ProgramViolation::Undeclared(n.clone()));
                    }
                }
                Lhs::Loc(f, args) => {
                    check_app(p, f, args.len(), out);
                    args.iter().for_each(|a| check_term(p, a, scope, out));
                }
            }
            check_term(p, t, scope, out);
        }
        Stmt::If(c, a, b) => {
            check_cond(p, c, scope, out);
            check_stmt(p, a, names, scope, out);
            if let Some(b) = b {
                check_stmt(p, b, names, scope, out);
            }
        }
        Stmt::Let(x, t, body) | Stmt::LetChoose(x, t, body) => {
            check_term(p, t, scope, out);
            if names.contains(x) || scope.contains(x) {
                out.push(ProgramViolation::Shadow(x.clone()));
            }
            scope.push(x.clone());
            check_stmt(p, body, names, scope, out);
            scope.pop();
        }
        Stmt::Par(v) => {
            let mut seen: BTreeSet<String> = BTreeSet::new();
            let mut reported = BTreeSet::new();
            for s in v {
                let mine = assigned_terms(s);
                for t in mine.intersection(&seen) {
                    if reported.insert(t.clone()) {
                        out.push(ProgramViolation::ParallelConflict(t.clone()));
                    }
                }
                seen.extend(mine);
                check_stmt(p, s, names, scope, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "atoms a, b;\nfunctions f/2;\nterms t, p;\ndo ";

    fn body(src: &str) -> Stmt {
        parse(&format!("{HEAD}{src}")).unwrap().body
    }

    #[test]
    fn guarded_function_assignment() {
        let s = body("if t != p then t := f(t,p)");
        assert_eq!(
            s,
            Stmt::If(
                Cond::Ne(Term::crit("t"), Term::crit("p")),
                Box::new(Stmt::Assign(
                    Lhs::Crit("t".into()),
                    Term::App("f".into(), vec![Term::crit("t"), Term::crit("p")])
                )),
                None
            )
        );
    }

    #[test]
    fn membership_guard_and_singleton() {
        assert_eq!(
            body("if t in p then t := p"),
            Stmt::If(
                Cond::In(Term::crit("t"), Term::crit("p")),
                Box::new(Stmt::Assign(Lhs::Crit("t".into()), Term::crit("p"))),
                None
            )
        );
        assert_eq!(
            body("p := {t}"),
            Stmt::Assign(Lhs::Crit("p".into()), Term::singleton(Term::crit("t")))
        );
    }

    #[test]
    fn set_literals_desugar() {
        assert_eq!(
            body("t := {t, p}"),
            Stmt::Assign(
                Lhs::Crit("t".into()),
                Term::union(Term::singleton(Term::crit("t")), Term::singleton(Term::crit("p")))
            )
        );
    }

    #[test]
    fn dangling_else_binds_inner() {
        let s = body("if t = p then if t in p then t := p else p := t");
        let Stmt::If(_, inner, None) = s else {
            panic!("outer if should have no else")
        };
        assert!(matches!(*inner, Stmt::If(_, _, Some(_))));
    }

    #[test]
    fn grouped_conditions_and_terms() {
        let s = body("if (t U p) in p and not (t = p or t in {}) then t := p");
        let Stmt::If(Cond::And(a, b), _, _) = s else {
            panic!()
        };
        assert!(matches!(*a, Cond::In(Term::Union(..), _)));
        assert!(matches!(*b, Cond::Not(_)));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("terms t;\ndo t := q").unwrap_err();
        assert!(matches!(e, ParseError::Undeclared { line: 2, col: 9, .. }), "{e}");
        let e = parse("functions f/2; terms t;\ndo t := f(t)").unwrap_err();
        assert!(matches!(e, ParseError::Arity { .. }));
        let e = parse("terms t;\ndo t := ").unwrap_err();
        assert!(e.to_string().contains("expected term"), "{e}");
        let e = parse("atoms a; terms t; do t := {a}").unwrap_err();
        assert!(matches!(e, ParseError::Declaration { .. }));
    }

    #[test]
    fn conflicting_parallel_assignment() {
        let p = parse(&format!("{HEAD}par {{ t := {{}}; t := {{p}} }}")).unwrap();
        assert_eq!(
            validate(&p),
            vec![ProgramViolation::ParallelConflict("t".into())]
        );
        let ok = parse(&format!("{HEAD}if t != p then t := f(t, p)")).unwrap();
        assert!(validate(&ok).is_empty());
        let ch = parse(&format!("{HEAD}let x = choose({{}}) in t := x")).unwrap();
        assert!(validate(&ch).is_empty());
    }

    #[test]
    fn printing_round_trips_and_is_stable() {
        let srcs = [
            "if t != p then t := f(t,p)",
            "if t in p then t := p",
            "p := {t}",
            "par { t := p; p := t; f(t, {}) := <t, p> }",
            "if t = p then par { if t in p then t := p } else let x = choose(t U p) in p := {x, x}",
            "if not not (t in p or t = p) and t != {} then par {} else t := (t U p) U (p U t)",
        ];
        for s in srcs {
            let p = parse(&format!("{HEAD}{s}")).unwrap();
            let text = pretty_print(&p);
            assert_eq!(parse(&text).unwrap(), p, "{text}");
            assert_eq!(pretty_print(&parse(&text).unwrap()), text);
        }
    }

    #[test]
    fn singleton_par_and_dangling_else_round_trip() {
        let inner = Stmt::If(
            Cond::In(Term::Crit("t".into()), Term::Crit("p".into())),
            Box::new(Stmt::Assign(Lhs::Crit("t".into()), Term::Empty)),
            None,
        );
        for body in [
            Stmt::Par(vec![inner.clone()]),
            Stmt::If(
                Cond::Eq(Term::Crit("t".into()), Term::Empty),
                Box::new(inner.clone()),
                Some(Box::new(Stmt::Assign(Lhs::Crit("p".into()), Term::Empty))),
            ),
        ] {
            let p = Program {
                atoms: vec![],
                functions: vec![],
                terms: vec!["t".into(), "p".into()],
                body,
            };
            let text = pretty_print(&p);
            assert_eq!(parse(&text).unwrap(), p, "{text}");
        }
        let grouped = parse("terms t; do { t := {} }").unwrap();
        assert_eq!(grouped.body, Stmt::Assign(Lhs::Crit("t".into()), Term::Empty));
    }
}
