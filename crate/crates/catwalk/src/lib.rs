//! Exact solver, optimality prover and simulator for "catch the walking cat"
//! pursuit games.
//!
//! A cat hides in one of `n` boxes arranged in a line, a ring or a 2xm grid.
//! Each step the player opens one box; if the cat is not there it walks to a
//! random adjacent box (or escapes through an exit door, where present). The
//! library computes exact expected game durations and escape rates for opening
//! strategies, searches for optimal strategies, certifies local optimality by
//! deviation testing, and cross-checks everything with seeded Monte Carlo
//! playouts.
//!
//! All game probabilities are exact rationals; floating point appears only in
//! the spectral/asymptotic utilities and the simulator.

pub mod cli;
pub mod dynamics;
pub mod evaluate;
pub mod formulas;
pub mod montecarlo;
pub mod numerics;
pub mod prove;
pub mod search;
pub mod strategy;
pub mod tables;
pub mod topology;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("strategy parse error: {0}")]
    Parse(String),
    #[error("box {box_id} out of range 1..={boxes}")]
    BoxOutOfRange { box_id: usize, boxes: usize },
    #[error("finite strategy exhausted at step {step}")]
    StrategyExhausted { step: usize },
    #[error("unresolved finite strategy: mass {remaining} left after the prefix")]
    UnresolvedFinite { remaining: String },
    #[error("divergent: (I - M) is singular on the reachable support")]
    Divergent,
    #[error("singular matrix")]
    Singular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
