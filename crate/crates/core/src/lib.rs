//! Greedy single server on the circle `R/Z` and on the line: an explicit
//! customer simulator, the potential (last-reveal) process, drift and
//! coupling experiments, and the block detector for line trajectories.

pub mod blocks;
pub mod cli;
pub mod coupling;
pub mod engine;
pub mod error;
pub mod explicit_sim;
pub mod geometry;
pub mod lyapunov;
pub mod potential_sim;
pub mod stats;
