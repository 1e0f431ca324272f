//! Simulator for cell-like membrane systems.
//!
//! A membrane system is a rooted tree of compartments holding multisets of
//! objects, rewritten by rules in synchronous, nondeterministic, maximally
//! parallel steps. This crate implements two models — transition systems
//! with priorities, catalysts, and target indications, and active-membranes
//! systems with division, dissolution, and communication — together with:
//!
//! - a line-oriented textual format for system descriptions ([`parser`]),
//! - a two-phase (select, then execute) stepping engine with seeded,
//!   reproducible nondeterminism ([`engine`]),
//! - a brute-force selection oracle and a bounded computation-tree explorer
//!   for auditing the engine ([`engine::oracle`], [`engine::explore`]),
//! - a worker-parallel runtime whose results are independent of worker
//!   count ([`runtime`]),
//! - a "membrane OS" layer: independent engine instances with local clocks,
//!   input injection, and failure-triggered reproduction with deterministic
//!   replay, grouped into supervised tissues ([`mos`]).
//!
//! See the crate examples for runnable walkthroughs of each capability.

pub mod bundled;
pub mod config;
pub mod engine;
pub mod gen;
pub mod model;
pub mod mos;
pub mod multiset;
pub mod parser;
pub mod rng;
pub mod runtime;

pub use config::{Configuration, MembraneInstance};
pub use model::{
    ActiveOp, ActiveRule, Label, MembraneTemplate, Mode, ModelError, OutputRegion, PSystemSpec,
    Rules, Target, TransitionRule, Violation,
};
pub use model::validate_spec;
pub use multiset::{Multiset, Symbol};
