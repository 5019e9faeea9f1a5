//! The sequential simulation loop.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pattern::{apply_rule, match_rule, maximality_filter, ApplyError, Match};
pub use crate::pattern::{Rule, RuleSet};
use crate::tangle::{check_invariants, check_structure, Color, NodeId, Tangle, Violation};

pub const DEFAULT_MAX_TICKS: u64 = 1_000_000;

/// Criticals colors with this prefix mark mid-protocol states where only
/// structural invariants are checked.
pub const LOCK_PREFIX: &str = "lock:";

/// Tie-break among surviving matches of the winning rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Lexicographically smallest binding.
    #[default]
    Deterministic,
    /// Seeded uniform choice.
    Random,
}

#[derive(Debug, Clone)]
pub struct Configuration {
    pub tangle: Tangle,
    pub tick: u64,
    pub mode: Mode,
    rng: ChaCha8Rng,
}

impl Configuration {
    pub fn new(tangle: Tangle) -> Self {
        Self::seeded(tangle, 0, Mode::Deterministic)
    }

    pub fn seeded(tangle: Tangle, seed: u64, mode: Mode) -> Self {
        Configuration {
            tangle,
            tick: 0,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepStats {
    pub total: u64,
    pub phases: BTreeMap<String, u64>,
}

impl StepStats {
    pub fn phase(&self, tag: &str) -> u64 {
        self.phases.get(tag).copied().unwrap_or(0)
    }

    fn record(&mut self, rule_name: &str) {
        self.total += 1;
        let tag = rule_name.split(':').next().unwrap_or("");
        *self.phases.entry(tag.to_string()).or_default() += 1;
    }
}

impl fmt::Display for StepStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (tag, n) in &self.phases {
            writeln!(f, "phase {tag} {n}")?;
        }
        writeln!(f, "total {}", self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Quiescent,
    BudgetExhausted,
    /// The caller's observer asked to stop.
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("tick {tick}: invariant violation: {}", fmt_violations(.violations))]
    Invariant { tick: u64, violations: Vec<Violation> },
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_ticks: u64,
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_ticks: DEFAULT_MAX_TICKS,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Applied(Match),
    Quiescent,
}

/// Rules grouped by the color their focus cell demands, so a tick only
/// looks at rules that can fire on the active node.
pub struct Engine<'a> {
    rules: &'a RuleSet,
    by_color: HashMap<Color, Vec<usize>>,
    wildcard: Vec<usize>,
}

impl<'a> Engine<'a> {
    pub fn new(rules: &'a RuleSet) -> Self {
        let mut by_color: HashMap<Color, Vec<usize>> = HashMap::new();
        let mut wildcard = Vec::new();
        for (i, r) in rules.rules.iter().enumerate() {
            let focus = r
                .pattern
                .cell_index(&r.pattern.focus)
                .and_then(|c| r.pattern.cells[c].color.clone());
            match focus {
                Some(c) => by_color.entry(c).or_default().push(i),
                None => wildcard.push(i),
            }
        }
        Engine {
            rules,
            by_color,
            wildcard,
        }
    }

    /// Candidate matches at the active node, in rule order.
    pub fn matches(&self, g: &Tangle) -> Vec<Match> {
        let active = g.active();
        let color = &g.node(active).color;
        let mut idx: Vec<usize> = self.by_color.get(color).cloned().unwrap_or_default();
        idx.extend(&self.wildcard);
        idx.sort_unstable();
        idx.into_iter()
            .flat_map(|i| match_rule(g, i, &self.rules.rules[i], active))
            .collect()
    }

    pub fn step(&self, cfg: &mut Configuration) -> Result<StepResult, RunError> {
        let survivors = maximality_filter(self.matches(&cfg.tangle));
        let Some(best) = survivors.iter().map(|m| m.rule).min() else {
            return Ok(StepResult::Quiescent);
        };
        let mut tied: Vec<Match> = survivors.into_iter().filter(|m| m.rule == best).collect();
        let pick = match cfg.mode {
            Mode::Deterministic => 0,
            Mode::Random => cfg.rng.gen_range(0..tied.len()),
        };
        let m = tied.swap_remove(pick);
        apply_rule(&mut cfg.tangle, &self.rules.rules[m.rule], &m)?;
        cfg.tick += 1;
        Ok(StepResult::Applied(m))
    }

    /// Steps until quiescence, budget exhaustion, or until `observe` returns
    /// true after some tick.
    pub fn run_observed(
        &self,
        cfg: &mut Configuration,
        opts: RunOptions,
        observe: &mut dyn FnMut(&Match, &Tangle, u64) -> bool,
    ) -> Result<(StepStats, Outcome), RunError> {
        let mut stats = StepStats::default();
        let mut nodes = cfg.tangle.node_count();
        let mut used = 0;
        loop {
            if used >= opts.max_ticks {
                // peek: a quiescent tangle at the budget edge is still quiescent
                return Ok(if self.is_quiescent(&cfg.tangle) {
                    (stats, Outcome::Quiescent)
                } else {
                    (stats, Outcome::BudgetExhausted)
                });
            }
            let m = match self.step(cfg)? {
                StepResult::Quiescent => return Ok((stats, Outcome::Quiescent)),
                StepResult::Applied(m) => m,
            };
            used += 1;
            stats.record(&m.rule_name);
            if opts.check_invariants {
                let mut v = check_structure(&cfg.tangle);
                let now = cfg.tangle.node_count();
                if now < nodes {
                    v.push(Violation::NodesLost {
                        before: nodes,
                        after: now,
                    });
                }
                nodes = now;
                let c = cfg.tangle.criticals();
                if v.is_empty() && !cfg.tangle.node(c).color.as_str().starts_with(LOCK_PREFIX) {
                    v = check_invariants(&cfg.tangle);
                }
                if !v.is_empty() {
                    return Err(RunError::Invariant {
                        tick: cfg.tick,
                        violations: v,
                    });
                }
            }
            if observe(&m, &cfg.tangle, cfg.tick) {
                return Ok((stats, Outcome::Stopped));
            }
        }
    }

    pub fn is_quiescent(&self, g: &Tangle) -> bool {
        self.matches(g).is_empty()
    }
}

pub fn step(cfg: &mut Configuration, rules: &RuleSet) -> Result<StepResult, RunError> {
    Engine::new(rules).step(cfg)
}

pub fn run(
    cfg: &mut Configuration,
    rules: &RuleSet,
    opts: RunOptions,
) -> Result<(StepStats, Outcome), RunError> {
    Engine::new(rules).run_observed(cfg, opts, &mut |_, _, _| false)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub tick: u64,
    pub rule: String,
    pub binding: Vec<NodeId>,
    pub snapshot: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.binding.iter().map(ToString::to_string).collect();
        writeln!(f, "tick {} {} [{}]", self.tick, self.rule, b.join(" "))?;
        f.write_str(&self.snapshot)
    }
}

pub fn trace(
    cfg: &mut Configuration,
    rules: &RuleSet,
    opts: RunOptions,
) -> Result<(Vec<TraceEntry>, Outcome), RunError> {
    let mut entries = Vec::new();
    let (_, outcome) = Engine::new(rules).run_observed(cfg, opts, &mut |m, g, tick| {
        entries.push(TraceEntry {
            tick,
            rule: m.rule_name.clone(),
            binding: m.binding.clone(),
            snapshot: g.snapshot(),
        });
        false
    })?;
    Ok((entries, outcome))
}
