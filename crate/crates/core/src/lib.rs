//! Simulation and analysis toolkit for first passage percolation in a
//! hostile environment (FPPHE).
//!
//! Two infections compete on a finite multigraph. `FPP1` starts at the
//! origin and crosses each edge after an `Exp(1)` delay. Every other vertex
//! independently hosts a dormant seed with probability `mu`; the first
//! infection attempt on a seed activates it, after which that vertex spreads
//! `FPPλ` at rate `lambda`. Each vertex keeps the type it is first infected
//! with.
//!
//! The crate is organised as:
//!
//! * [`graph`]: tree, capped tree, tile and tile-tree constructions.
//! * [`seeding`]: Bernoulli seed configurations.
//! * [`sim`]: the event-driven simulator and an explicit-clock oracle.
//! * [`analytics`]: closed-form and fixed-point calculators.
//! * [`feasibility`]: the `(H, L)` parameter system and rate constants.
//! * [`brw`]: branching random walk diagnostics.
//! * [`experiments`]: Monte Carlo orchestration with Wilson intervals.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod brw;
pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod graph;
pub mod rng;
pub mod seeding;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{Graph, Role, Side, TileParams, TileTree, VertexId};
pub use seeding::SeedConfig;
pub use sim::{PType, SimOutcome, StopCondition, StopReason};
