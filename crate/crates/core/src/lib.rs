//! Equilibrium action-frequency bounds for reputation games.
//!
//! A patient player facing a stream of myopic opponents can be held to a
//! Stackelberg-action frequency no lower than the value of a small linear
//! program over incentive-compatible profiles. This crate computes that
//! bound, the set of attainable action frequencies, the supporting stage-game
//! quantities, and a Monte Carlo simulator of an equilibrium that attains
//! them.

pub mod apps;
pub mod bounds;
pub mod cli;
pub mod concentration;
pub mod game;
pub mod lp;
pub mod polytope;
pub mod rng;
pub mod sets;
pub mod sim;
pub mod stage;
