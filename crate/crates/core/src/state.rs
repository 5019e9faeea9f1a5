//! Machine states: critical-term values plus function locations.
//!
//! Text format, one entry per line (`#` starts a comment):
//!
//! ```text
//! term t = {a, {b}}
//! loc g({a}, {}) = <a, b>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::hfset::{Atom, HfValue, ValueParseError, ValueParser};

/// A function location: symbol plus argument values.
pub type Location = (String, Vec<HfValue>);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct State {
    pub values: BTreeMap<String, HfValue>,
    /// Locations not listed here hold the empty set.
    pub locations: BTreeMap<Location, HfValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateParseError {
    #[error("line {line}: {source}")]
    Value {
        line: usize,
        #[source]
        source: ValueParseError,
    },
    #[error("line {line}: expected `term` or `loc`")]
    BadLine { line: usize },
    #[error("line {line}: duplicate entry for {what}")]
    Duplicate { line: usize, what: String },
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, term: &str, value: HfValue) -> Self {
        self.values.insert(term.to_string(), value);
        self
    }

    pub fn get(&self, term: &str) -> Option<&HfValue> {
        self.values.get(term)
    }

    pub fn location(&self, f: &str, args: &[HfValue]) -> HfValue {
        self.locations
            .get(&(f.to_string(), args.to_vec()))
            .cloned()
            .unwrap_or_else(HfValue::empty)
    }

    /// Drops locations holding the default empty set.
    pub fn normalized(&self) -> State {
        State {
            values: self.values.clone(),
            locations: self
                .locations
                .iter()
                .filter(|(_, v)| **v != HfValue::empty())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        for v in self.values.values() {
            v.atoms(&mut out);
        }
        for ((_, args), v) in &self.locations {
            args.iter().for_each(|a| a.atoms(&mut out));
            v.atoms(&mut out);
        }
        out
    }

    pub fn rename_atoms(&self, f: &impl Fn(&Atom) -> Atom) -> State {
        State {
            values: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), v.rename_atoms(f)))
                .collect(),
            locations: self
                .locations
                .iter()
                .map(|((g, args), v)| {
                    (
                        (g.clone(), args.iter().map(|a| a.rename_atoms(f)).collect()),
                        v.rename_atoms(f),
                    )
                })
                .collect(),
        }
    }

    pub fn parse(src: &str) -> Result<State, StateParseError> {
        let mut st = State::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let wrap = |source| StateParseError::Value { line, source };
            if let Some(rest) = text.strip_prefix("term ") {
                let mut p = ValueParser::new(rest);
                let name = p.ident().map_err(wrap)?;
                p.expect_char(b'=').map_err(wrap)?;
                let v = p.value().map_err(wrap)?;
                if !p.at_end() {
                    return Err(wrap(p.error("trailing input")));
                }
                if st.values.insert(name.clone(), v).is_some() {
                    return Err(StateParseError::Duplicate { line, what: name });
                }
            } else if let Some(rest) = text.strip_prefix("loc ") {
                let mut p = ValueParser::new(rest);
                let f = p.ident().map_err(wrap)?;
                p.expect_char(b'(').map_err(wrap)?;
                let mut args = Vec::new();
                if !p.eat_char(b')') {
                    loop {
                        args.push(p.value().map_err(wrap)?);
                        if p.eat_char(b')') {
                            break;
                        }
                        p.expect_char(b',').map_err(wrap)?;
                    }
                }
                p.expect_char(b'=').map_err(wrap)?;
                let v = p.value().map_err(wrap)?;
                if !p.at_end() {
                    return Err(wrap(p.error("trailing input")));
                }
                let what = format!("{f}/{}", args.len());
                if st.locations.insert((f, args), v).is_some() {
                    return Err(StateParseError::Duplicate { line, what });
                }
            } else {
                return Err(StateParseError::BadLine { line });
            }
        }
        Ok(st)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "term {k} = {v}")?;
        }
        for ((g, args), v) in &self.locations {
            let args: Vec<String> = args.iter().map(ToString::to_string).collect();
            writeln!(f, "loc {g}({}) = {v}", args.join(", "))?;
        }
        Ok(())
    }
}
