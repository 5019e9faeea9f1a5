//! Dynamic cellular automata over hereditarily finite sets, and a compiler
//! from a small ASM language into them.

pub mod asmlang;
pub mod bench;
pub mod compiler;
pub mod difftest;
pub mod generator;
pub mod automaton;
pub mod hfset;
pub mod interpreter;
pub mod pattern;
pub mod state;
pub mod tangle;
