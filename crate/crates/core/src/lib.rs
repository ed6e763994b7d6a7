//! Trustworthy reputation games.
//!
//! Users endorse servers (and each other) with probability weights; the
//! Designated PageRank of the resulting graph scores the servers, and each
//! user is rewarded by its share of the contribution PageRank mass of the
//! servers that behave correctly. The crate computes those scores and
//! rewards, checks the equilibrium and decodability properties of the game
//! numerically, and simulates a round-robin bootstrapping phase that turns
//! detected corruption into nature's outcome.

// `!(x > 0.0)` checks also reject NaN; matrix code indexes explicitly.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod cli;
pub mod decoder;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod numfmt;
pub mod pagerank;
pub mod repgraph;
pub mod rng;

pub use error::{Error, Result};
pub use game::{BeliefVector, NatureOutcome, StrategyProfile, TRepGame};
pub use pagerank::{
    ContributionMatrix, ReputationScores, StationaryDistribution, TransitionMatrix,
};
pub use repgraph::{Config, RepGraph, TrustVector};

/// `u / ‖u‖₁`, or `None` when `u` has no positive mass.
pub(crate) fn l1_normalize(u: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = u.iter().sum();
    (s > 0.0).then(|| u.iter().map(|x| x / s).collect())
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
