//! Tick-count scaling of the compiled operations.

use std::fmt;

use crate::asmlang::parse;
use crate::automaton::{Configuration, Engine, RunOptions};
use crate::compiler::{compile, simulate, CompilationUnit, CompileOptions, SimOptions};
use crate::hfset::HfValue;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    Pair,
    Choice,
    Cond,
    Singleton,
    Union,
    /// Union with negative-edge early rejects.
    UnionNeg,
    /// `t := t U {t}` for `size` ASM steps, counting every tick.
    Overhead,
}

impl BenchOp {
    pub const ALL: [BenchOp; 7] = [
        BenchOp::Pair,
        BenchOp::Choice,
        BenchOp::Cond,
        BenchOp::Singleton,
        BenchOp::Union,
        BenchOp::UnionNeg,
        BenchOp::Overhead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Pair => "pair",
            BenchOp::Choice => "choice",
            BenchOp::Cond => "cond",
            BenchOp::Singleton => "singleton",
            BenchOp::Union => "union",
            BenchOp::UnionNeg => "union-neg",
            BenchOp::Overhead => "overhead",
        }
    }

    pub fn parse(s: &str) -> Option<BenchOp> {
        BenchOp::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            BenchOp::Pair | BenchOp::Choice | BenchOp::Cond => vec![2, 32],
            BenchOp::Singleton => vec![2, 4, 8, 16],
            BenchOp::Union | BenchOp::UnionNeg => vec![2, 4, 8, 16, 32],
            BenchOp::Overhead => vec![4, 8, 16, 32],
        }
    }

    pub fn window(self) -> Window {
        match self {
            BenchOp::Pair | BenchOp::Choice | BenchOp::Cond => Window::Constant,
            BenchOp::Singleton => Window::Exponent(0.7, 1.3),
            BenchOp::Union => Window::Exponent(1.6, 2.4),
            BenchOp::UnionNeg => Window::Report,
            BenchOp::Overhead => Window::Exponent(f64::NEG_INFINITY, 2.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Identical tick counts at every size.
    Constant,
    Exponent(f64, f64),
    /// Measured only.
    Report,
}

fn atoms(prefix: &str, n: usize) -> Vec<HfValue> {
    (0..n)
        .map(|i| HfValue::atom(&format!("{prefix}{i}")).unwrap())
        .collect()
}

/// Program, state, and the construct whose ticks are counted (`None`
/// counts everything).
fn workload(op: BenchOp, n: usize) -> (&'static str, State, Option<&'static str>) {
    let a = atoms("a", n);
    let b = atoms("b", n);
    let s = HfValue::set_of(a.clone());
    let p = HfValue::set_of(b.clone());
    match op {
        BenchOp::Pair => (
            "terms t, p, q; do t := <p, q>",
            State::new().with("p", s).with("q", p),
            Some("pair"),
        ),
        BenchOp::Choice => (
            "terms t, p; do let x = choose(p) in t := x",
            State::new().with("p", s),
            Some("choose"),
        ),
        BenchOp::Cond => (
            "terms t, p; do if t in p then t := p",
            State::new().with("t", a[0].clone()).with("p", s),
            Some("test"),
        ),
        BenchOp::Singleton => {
            // t has n parent sets, none of them {t}
            let x = HfValue::atom("x").unwrap();
            let parents = b.iter().map(|m| HfValue::set_of([x.clone(), m.clone()]));
            (
                "terms t, q, r; do r := {t}",
                State::new().with("t", x.clone()).with("q", HfValue::set_of(parents)),
                Some("single"),
            )
        }
        BenchOp::Union | BenchOp::UnionNeg => {
            // near misses contain all of q, so each is a candidate: q ∪ {a0..ak}
            // fails only after full marking; q ∪ {c0..ck} has foreign members
            // that a negative-edge rule spots at once
            let extra = if op == BenchOp::Union { a.clone() } else { atoms("c", n) };
            let near = (1..n).map(|k| HfValue::set_of(b.iter().chain(&extra[..k]).cloned()));
            (
                "terms t, p, q, r; do r := p U q",
                State::new()
                    .with("p", s)
                    .with("q", p)
                    .with("t", HfValue::set_of(near)),
                Some("union"),
            )
        }
        BenchOp::Overhead => ("terms t; do t := t U {t}", State::new(), None),
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub op: BenchOp,
    pub sizes: Vec<usize>,
    pub ticks: Vec<u64>,
    pub exponent: Option<f64>,
    /// Same workload without negative edges (`union-neg` only).
    pub baseline: Option<Vec<u64>>,
    pub pass: bool,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bench {}", self.op.name())?;
        for (n, t) in self.sizes.iter().zip(&self.ticks) {
            writeln!(f, "size {n} ticks {t}")?;
        }
        if let Some(e) = self.exponent {
            writeln!(f, "exponent {e:.3}")?;
        }
        if let Some(base) = &self.baseline {
            for (n, t) in self.sizes.iter().zip(base) {
                writeln!(f, "size {n} baseline {t}")?;
            }
            writeln!(f, "baseline exponent {:.3}", exponent_of(&self.sizes, base))?;
        }
        let window = match self.op.window() {
            Window::Constant => "constant".to_string(),
            Window::Exponent(lo, hi) if lo.is_finite() => format!("[{lo}, {hi}]"),
            Window::Exponent(_, hi) => format!("<= {hi}"),
            Window::Report => "none".to_string(),
        };
        writeln!(f, "window {window}")?;
        writeln!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn unit_for(src: &str, negative_edges: bool) -> CompilationUnit {
    let opts = CompileOptions { negative_edges };
    compile(&parse(src).expect("bench program"), opts).expect("bench program compiles")
}

/// Ticks spent by one run of the workload at size `n`.
pub fn measure(op: BenchOp, n: usize) -> u64 {
    measure_with(op, n, op == BenchOp::UnionNeg)
}

fn measure_with(op: BenchOp, n: usize, negative_edges: bool) -> u64 {
    let (src, state, construct) = workload(op, n);
    let unit = unit_for(src, negative_edges);
    match construct {
        None => {
            let r = simulate(
                &unit,
                &state,
                SimOptions {
                    max_steps: n as u64,
                    ..SimOptions::default()
                },
            )
            .expect("bench run");
            r.stats.total
        }
        Some(prefix) => {
            let engine = Engine::new(&unit.ruleset);
            let mut cfg = Configuration::new(unit.initial_tangle(&state));
            let mut ticks = 0;
            let mut seen_idle = false;
            let _ = engine.run_observed(&mut cfg, RunOptions::default(), &mut |m, g, _| {
                let construct = m.rule_name.split(':').nth(1).unwrap_or("");
                if construct.starts_with(prefix) {
                    ticks += 1;
                }
                // one ASM step is enough
                seen_idle |= g.node(g.criticals()).color.as_str() == crate::tangle::colors::IDLE;
                seen_idle
            });
            ticks
        }
    }
}

pub fn run_bench(op: BenchOp, sizes: &[usize]) -> BenchReport {
    let ticks: Vec<u64> = sizes.iter().map(|&n| measure(op, n)).collect();
    let exponent = (sizes.len() >= 2).then(|| exponent_of(sizes, &ticks));
    let baseline = (op == BenchOp::UnionNeg)
        .then(|| sizes.iter().map(|&n| measure_with(op, n, false)).collect());
    let pass = match op.window() {
        Window::Constant => ticks.windows(2).all(|w| w[0] == w[1]),
        Window::Exponent(lo, hi) => exponent.is_some_and(|e| e >= lo && e <= hi),
        Window::Report => true,
    };
    BenchReport {
        op,
        sizes: sizes.to_vec(),
        ticks,
        exponent,
        baseline,
        pass,
    }
}

fn exponent_of(sizes: &[usize], ticks: &[u64]) -> f64 {
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .zip(ticks)
        .map(|(&n, &t)| (n as f64, t.max(1) as f64))
        .collect();
    fit_exponent(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_exact_powers() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x * x)).collect();
        assert!((fit_exponent(&pts) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_ticks_are_two_per_parent_plus_three() {
        for k in [1, 2, 5] {
            assert_eq!(measure(BenchOp::Singleton, k), 2 * k as u64 + 3);
        }
    }
}
