//! Direct execution of ASM-lite programs over HF values.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asmlang::{Cond, Lhs, Program, Stmt, Term};
use crate::hfset::{self, HfError, HfValue, Limits};
use crate::state::State;

pub const DEFAULT_MAX_STEPS: u64 = 10_000;

/// Resolves `choose` points.
pub trait Chooser {
    fn choose(&mut self, set: &HfValue) -> Result<HfValue, HfError>;
}

/// Uniform draw over members sorted by canonical id.
pub struct SeededChooser(ChaCha8Rng);

impl SeededChooser {
    pub fn new(seed: u64) -> Self {
        SeededChooser(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Chooser for SeededChooser {
    fn choose(&mut self, set: &HfValue) -> Result<HfValue, HfError> {
        hfset::choose(set, &mut self.0)
    }
}

/// Follows a fixed list of member indices (into canonical-id order) and
/// records how many options each choice point had. Indices past the end of
/// the script pick the first member.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChooser {
    pub script: Vec<usize>,
    pub branching: Vec<usize>,
}

impl Chooser for ScriptedChooser {
    fn choose(&mut self, set: &HfValue) -> Result<HfValue, HfError> {
        if !set.is_set() {
            return Err(HfError::NotASet {
                op: "choose",
                got: set.to_string(),
            });
        }
        let members = hfset::members_by_id(set);
        if members.is_empty() {
            return Err(HfError::ChooseEmpty);
        }
        let i = self.script.get(self.branching.len()).copied().unwrap_or(0);
        self.branching.push(members.len());
        Ok(members[i.min(members.len() - 1)].clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("in `{term}`: {source}")]
pub struct EvalError {
    pub term: String,
    #[source]
    pub source: HfError,
}

/// A location written by an update.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum UpdateLoc {
    Term(String),
    Loc(String, Vec<HfValue>),
}

impl fmt::Display for UpdateLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateLoc::Term(t) => f.write_str(t),
            UpdateLoc::Loc(g, args) => {
                let a: Vec<String> = args.iter().map(ToString::to_string).collect();
                write!(f, "{g}({})", a.join(", "))
            }
        }
    }
}

pub type UpdateSet = BTreeMap<UpdateLoc, HfValue>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FireError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("inconsistent update to {0}")]
    Inconsistent(UpdateLoc),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fired {
    Next(State),
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Terminal,
    BudgetExhausted,
    Inconsistent(UpdateLoc),
    Failed(EvalError),
}

impl Outcome {
    /// Coarse class used when comparing against the automaton.
    pub fn class(&self) -> &'static str {
        match self {
            Outcome::Terminal => "terminal",
            Outcome::BudgetExhausted => "budget",
            Outcome::Inconsistent(_) | Outcome::Failed(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    /// Last state reached before stopping.
    pub state: State,
    pub steps: u64,
    pub outcome: Outcome,
}

pub struct Interpreter<'p> {
    pub program: &'p Program,
    pub limits: Limits,
}

type Env = Vec<(String, HfValue)>;

impl<'p> Interpreter<'p> {
    pub fn new(program: &'p Program) -> Self {
        Interpreter {
            program,
            limits: Limits {
                max_depth: usize::MAX,
                max_width: usize::MAX,
            },
        }
    }

    pub fn eval_term(&self, t: &Term, s: &State, env: &Env) -> Result<HfValue, EvalError> {
        let wrap = |source| EvalError {
            term: t.to_string(),
            source,
        };
        Ok(match t {
            Term::Crit(n) => s.get(n).cloned().unwrap_or_else(HfValue::empty),
            Term::Local(x) => env
                .iter()
                .rev()
                .find(|(y, _)| y == x)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(HfValue::empty),
            Term::Empty => HfValue::empty(),
            Term::Singleton(a) => {
                hfset::singleton(self.eval_term(a, s, env)?, &self.limits).map_err(wrap)?
            }
            Term::Union(a, b) => {
                let (a, b) = (self.eval_term(a, s, env)?, self.eval_term(b, s, env)?);
                hfset::union(&a, &b, &self.limits).map_err(wrap)?
            }
            Term::Pair(a, b) => {
                let (a, b) = (self.eval_term(a, s, env)?, self.eval_term(b, s, env)?);
                hfset::pair(a, b, &self.limits).map_err(wrap)?
            }
            Term::App(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval_term(a, s, env))
                    .collect::<Result<Vec<_>, _>>()?;
                s.location(f, &vals)
            }
        })
    }

    pub fn eval_cond(&self, c: &Cond, s: &State, env: &Env) -> Result<bool, EvalError> {
        Ok(match c {
            Cond::In(a, b) => {
                let (x, y) = (self.eval_term(a, s, env)?, self.eval_term(b, s, env)?);
                hfset::member(&x, &y).map_err(|source| EvalError {
                    term: c.to_string(),
                    source,
                })?
            }
            Cond::Eq(a, b) => self.eval_term(a, s, env)? == self.eval_term(b, s, env)?,
            Cond::Ne(a, b) => self.eval_term(a, s, env)? != self.eval_term(b, s, env)?,
            Cond::Not(c) => !self.eval_cond(c, s, env)?,
            Cond::And(a, b) => self.eval_cond(a, s, env)? && self.eval_cond(b, s, env)?,
            Cond::Or(a, b) => self.eval_cond(a, s, env)? || self.eval_cond(b, s, env)?,
        })
    }

    fn collect(
        &self,
        st: &Stmt,
        s: &State,
        env: &mut Env,
        ch: &mut dyn Chooser,
        out: &mut UpdateSet,
    ) -> Result<(), FireError> {
        match st {
            Stmt::Assign(lhs, t) => {
                let v = self.eval_term(t, s, env)?;
                let loc = match lhs {
                    Lhs::Crit(n) => UpdateLoc::Term(n.clone()),
                    Lhs::Loc(f, args) => UpdateLoc::Loc(
                        f.clone(),
                        args.iter()
                            .map(|a| self.eval_term(a, s, env))
                            .collect::<Result<_, _>>()?,
                    ),
                };
                match out.get(&loc) {
                    Some(prev) if *prev != v => return Err(FireError::Inconsistent(loc)),
                    _ => {
                        out.insert(loc, v);
                    }
                }
            }
            Stmt::If(c, a, b) => {
                if self.eval_cond(c, s, env)? {
                    self.collect(a, s, env, ch, out)?;
                } else if let Some(b) = b {
                    self.collect(b, s, env, ch, out)?;
                }
            }
            Stmt::Let(x, t, body) => {
                let v = self.eval_term(t, s, env)?;
                env.push((x.clone(), v));
                let r = self.collect(body, s, env, ch, out);
                env.pop();
                r?;
            }
            Stmt::LetChoose(x, t, body) => {
                let set = self.eval_term(t, s, env)?;
                let v = ch.choose(&set).map_err(|source| EvalError {
                    term: format!("choose({t})"),
                    source,
                })?;
                env.push((x.clone(), v));
                let r = self.collect(body, s, env, ch, out);
                env.pop();
                r?;
            }
            Stmt::Par(v) => {
                for st in v {
                    self.collect(st, s, env, ch, out)?;
                }
            }
        }
        Ok(())
    }

    pub fn updates(&self, s: &State, ch: &mut dyn Chooser) -> Result<UpdateSet, FireError> {
        let mut out = UpdateSet::new();
        self.collect(&self.program.body, s, &mut Vec::new(), ch, &mut out)?;
        Ok(out)
    }

    pub fn fire(&self, s: &State, ch: &mut dyn Chooser) -> Result<Fired, FireError> {
        let ups = self.updates(s, ch)?;
        if ups.is_empty() {
            return Ok(Fired::Terminal);
        }
        let mut next = s.clone();
        for (loc, v) in ups {
            match loc {
                UpdateLoc::Term(t) => {
                    next.values.insert(t, v);
                }
                UpdateLoc::Loc(f, args) => {
                    next.locations.insert((f, args), v);
                }
            }
        }
        Ok(Fired::Next(next.normalized()))
    }

    pub fn run(&self, s0: &State, ch: &mut dyn Chooser, max_steps: u64) -> RunResult {
        let mut s = initial_state(self.program, s0);
        let mut steps = 0;
        loop {
            if steps >= max_steps {
                // a terminal state at the budget edge still counts as terminal
                let outcome = match self.updates(&s, ch) {
                    Ok(u) if u.is_empty() => Outcome::Terminal,
                    _ => Outcome::BudgetExhausted,
                };
                return RunResult {
                    state: s,
                    steps,
                    outcome,
                };
            }
            let outcome = match self.fire(&s, ch) {
                Ok(Fired::Next(n)) => {
                    s = n;
                    steps += 1;
                    continue;
                }
                Ok(Fired::Terminal) => Outcome::Terminal,
                Err(FireError::Inconsistent(l)) => Outcome::Inconsistent(l),
                Err(FireError::Eval(e)) => Outcome::Failed(e),
            };
            return RunResult {
                state: s,
                steps,
                outcome,
            };
        }
    }
}

/// The state a run actually starts from: every declared critical term is
/// present (missing ones hold the empty set) and empty locations are
/// dropped.
pub fn initial_state(p: &Program, s0: &State) -> State {
    let mut s = s0.normalized();
    for t in &p.terms {
        s.values.entry(t.clone()).or_insert_with(HfValue::empty);
    }
    s
}

pub fn fire(p: &Program, s: &State, seed: u64) -> Result<Fired, FireError> {
    Interpreter::new(p).fire(s, &mut SeededChooser::new(seed))
}

pub fn run_to_termination(p: &Program, s0: &State, seed: u64, max_steps: u64) -> RunResult {
    Interpreter::new(p).run(s0, &mut SeededChooser::new(seed), max_steps)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("more than {limit} choice paths")]
pub struct TooManyPaths {
    pub limit: usize,
}

/// Every run reachable under some resolution of the choice points,
/// enumerated depth first. Fails if there are more than `limit` paths.
pub fn enumerate_outcomes(
    p: &Program,
    s0: &State,
    max_steps: u64,
    limit: usize,
) -> Result<Vec<RunResult>, TooManyPaths> {
    let interp = Interpreter::new(p);
    let mut out = Vec::new();
    let mut pending = vec![Vec::new()];
    while let Some(script) = pending.pop() {
        if out.len() >= limit {
            return Err(TooManyPaths { limit });
        }
        let mut ch = ScriptedChooser {
            script: script.clone(),
            branching: Vec::new(),
        };
        let r = interp.run(s0, &mut ch, max_steps);
        // branch on every choice point past the forced prefix
        for d in (script.len()..ch.branching.len()).rev() {
            for alt in (1..ch.branching[d]).rev() {
                let mut next: Vec<usize> = ch.branching[..d].iter().map(|_| 0).collect();
                next[..script.len()].copy_from_slice(&script);
                next.push(alt);
                pending.push(next);
            }
        }
        out.push(r);
    }
    Ok(out)
}
