//! Random programs, states and values for differential and property tests.
//!
//! Programs are type-aware: critical terms and function locations only ever
//! hold sets and unions or memberships only see set operands, so no run hits
//! a type error. Chooses, when enabled, are guarded by a nonemptiness test.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::asmlang::{Cond, Lhs, Program, Stmt, Term};
use crate::hfset::HfValue;
use crate::state::State;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_stmts: usize,
    pub atoms: usize,
    pub value_depth: usize,
    pub terms: usize,
    pub term_depth: usize,
    pub functions: bool,
    pub choose: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_stmts: 20,
            atoms: 5,
            value_depth: 3,
            terms: 3,
            term_depth: 2,
            functions: true,
            choose: false,
        }
    }
}

pub fn atom_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

/// A value of depth at most `depth` (atoms have depth 0).
pub fn random_value<R: Rng + ?Sized>(rng: &mut R, atoms: &[String], depth: usize) -> HfValue {
    match rng.gen_range(0..4) {
        0 if !atoms.is_empty() => HfValue::atom(atoms.choose(rng).unwrap()).unwrap(),
        1 if depth > 0 => HfValue::pair(
            random_value(rng, atoms, depth - 1),
            random_value(rng, atoms, depth - 1),
        ),
        _ => random_set(rng, atoms, depth),
    }
}

pub fn random_set<R: Rng + ?Sized>(rng: &mut R, atoms: &[String], depth: usize) -> HfValue {
    if depth == 0 {
        return HfValue::empty();
    }
    let n = rng.gen_range(0..=3);
    HfValue::set_of((0..n).map(|_| random_value(rng, atoms, depth - 1)))
}

/// A state for `p`: every term holds a set, and a few function locations
/// are filled.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, p: &Program, cfg: &GenConfig) -> State {
    let atoms = atom_names(cfg.atoms);
    let mut s = State::new();
    for t in &p.terms {
        s = s.with(t, random_set(rng, &atoms, cfg.value_depth));
    }
    for (f, k) in &p.functions {
        for _ in 0..rng.gen_range(0..=2) {
            let args = (0..*k)
                .map(|_| random_value(rng, &atoms, cfg.value_depth - 1))
                .collect();
            s.locations
                .insert((f.clone(), args), random_set(rng, &atoms, cfg.value_depth));
        }
    }
    s.normalized()
}

struct ProgGen<'a, R: ?Sized> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
    terms: Vec<String>,
    functions: Vec<(String, usize)>,
    locals: usize,
    budget: usize,
}

/// In-scope let variables and whether each holds a set.
type Scope = Vec<(String, bool)>;

impl<R: Rng + ?Sized> ProgGen<'_, R> {
    fn set_term(&mut self, depth: usize, scope: &Scope) -> Term {
        let sets: Vec<&String> = scope.iter().filter(|(_, s)| *s).map(|(x, _)| x).collect();
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        if leaf {
            return match self.rng.gen_range(0..5) {
                0 => Term::Empty,
                1 if !sets.is_empty() => Term::Local(sets.choose(self.rng).unwrap().to_string()),
                _ => Term::Crit(self.terms.choose(self.rng).unwrap().clone()),
            };
        }
        match self.rng.gen_range(0..4) {
            0 => Term::singleton(self.any_term(depth - 1, scope)),
            1 if !self.functions.is_empty() => {
                let (f, k) = self.functions.choose(self.rng).unwrap().clone();
                let args = (0..k).map(|_| self.any_term(depth - 1, scope)).collect();
                Term::App(f, args)
            }
            _ => Term::union(self.set_term(depth - 1, scope), self.set_term(depth - 1, scope)),
        }
    }

    fn any_term(&mut self, depth: usize, scope: &Scope) -> Term {
        if depth > 0 && self.rng.gen_bool(0.2) {
            return Term::pair(self.any_term(depth - 1, scope), self.any_term(depth - 1, scope));
        }
        if self.rng.gen_bool(0.15) && scope.iter().any(|(_, s)| !s) {
            let others: Vec<&String> = scope.iter().filter(|(_, s)| !s).map(|(x, _)| x).collect();
            return Term::Local(others.choose(self.rng).unwrap().to_string());
        }
        self.set_term(depth, scope)
    }

    fn cond(&mut self, depth: usize, scope: &Scope) -> Cond {
        let d = self.cfg.term_depth;
        match self.rng.gen_range(0..if depth == 0 { 3 } else { 6 }) {
            0 => Cond::In(self.any_term(d, scope), self.set_term(d, scope)),
            1 => Cond::Eq(self.any_term(d, scope), self.any_term(d, scope)),
            2 => Cond::Ne(self.any_term(d, scope), self.any_term(d, scope)),
            3 => Cond::Not(Box::new(self.cond(depth - 1, scope))),
            4 => Cond::And(
                Box::new(self.cond(depth - 1, scope)),
                Box::new(self.cond(depth - 1, scope)),
            ),
            _ => Cond::Or(
                Box::new(self.cond(depth - 1, scope)),
                Box::new(self.cond(depth - 1, scope)),
            ),
        }
    }

    fn fresh_local(&mut self) -> String {
        self.locals += 1;
        format!("x{}", self.locals - 1)
    }

    fn assign(&mut self, targets: &[String], scope: &Scope) -> Stmt {
        let d = self.cfg.term_depth;
        if !self.functions.is_empty() && (targets.is_empty() || self.rng.gen_bool(0.25)) {
            let (f, k) = self.functions.choose(self.rng).unwrap().clone();
            let args = (0..k).map(|_| self.any_term(d - 1, scope)).collect();
            return Stmt::Assign(Lhs::Loc(f, args), self.set_term(d, scope));
        }
        match targets.choose(self.rng) {
            Some(t) => Stmt::Assign(Lhs::Crit(t.clone()), self.set_term(d, scope)),
            None => Stmt::Par(Vec::new()),
        }
    }

    /// A statement assigning only terms in `targets`.
    fn stmt(&mut self, depth: usize, targets: &[String], scope: &mut Scope) -> Stmt {
        if self.budget <= 1 || depth == 0 {
            self.budget = self.budget.saturating_sub(1);
            return self.assign(targets, scope);
        }
        self.budget -= 1;
        let d = self.cfg.term_depth;
        match self.rng.gen_range(0..10) {
            0..=2 => self.assign(targets, scope),
            3..=4 => {
                let c = self.cond(1, scope);
                let a = self.stmt(depth - 1, targets, scope);
                let b = self
                    .rng
                    .gen_bool(0.5)
                    .then(|| Box::new(self.stmt(depth - 1, targets, scope)));
                Stmt::If(c, Box::new(a), b)
            }
            5 => {
                let is_set = self.rng.gen_bool(0.7);
                let t = if is_set {
                    self.set_term(d, scope)
                } else {
                    self.any_term(d, scope)
                };
                let x = self.fresh_local();
                scope.push((x.clone(), is_set));
                let body = self.stmt(depth - 1, targets, scope);
                scope.pop();
                Stmt::Let(x, t, Box::new(body))
            }
            6 if self.cfg.choose => {
                let s = self.set_term(d, scope);
                let x = self.fresh_local();
                scope.push((x.clone(), false));
                let body = self.stmt(depth - 1, targets, scope);
                scope.pop();
                Stmt::If(
                    Cond::Ne(s.clone(), Term::Empty),
                    Box::new(Stmt::LetChoose(x, s, Box::new(body))),
                    None,
                )
            }
            _ => {
                let n = self.rng.gen_range(2..=3);
                let mut pool = targets.to_vec();
                pool.shuffle(self.rng);
                let mut parts: Vec<Vec<String>> = vec![Vec::new(); n];
                for (i, t) in pool.into_iter().enumerate() {
                    parts[i % n].push(t);
                }
                let mut out = Vec::new();
                for part in parts {
                    if self.budget == 0 {
                        break;
                    }
                    out.push(self.stmt(depth - 1, &part, scope));
                }
                Stmt::Par(out)
            }
        }
    }
}

/// A valid program within `cfg`'s bounds.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig) -> Program {
    let terms: Vec<String> = (0..cfg.terms.max(1)).map(|i| format!("t{i}")).collect();
    let functions = if cfg.functions {
        vec![("f".to_string(), 1), ("g".to_string(), 2)]
    } else {
        Vec::new()
    };
    let body = loop {
        let mut g = ProgGen {
            rng: &mut *rng,
            cfg,
            terms: terms.clone(),
            functions: functions.clone(),
            locals: 0,
            budget: cfg.max_stmts.max(1),
        };
        let body = g.stmt(4, &terms, &mut Vec::new());
        if body.count() <= cfg.max_stmts {
            break body;
        }
    };
    Program {
        atoms: atom_names(cfg.atoms),
        functions,
        terms,
        body,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asmlang::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_programs_are_valid_and_bounded() {
        let cfg = GenConfig {
            choose: true,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let p = random_program(&mut rng, &cfg);
            assert!(validate(&p).is_empty(), "{:?}\n{p:?}", validate(&p));
            assert!(p.body.count() <= cfg.max_stmts);
            let s = random_state(&mut rng, &p, &cfg);
            assert!(s.values.values().all(|v| v.is_set() && v.depth() <= 3));
            assert!(s.atoms().len() <= 5);
        }
    }
}
