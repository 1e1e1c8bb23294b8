//! Near-optimal harvesting and stocking policies for populations whose
//! growth switches between environmental regimes.
//!
//! The controlled diffusion is replaced by a locally consistent Markov chain
//! on a lattice ([`kernel`]), and the discounted control problem on that
//! chain is solved by dynamic programming ([`solver`]). Four formulations are
//! supported: bounded harvesting rates, variable effort, a stochastic price
//! state and seasonal (periodic) coefficients. [`montecarlo`] simulates the
//! diffusion under a computed policy to cross-check the value function.

pub mod dynamics;
pub mod cli;
pub mod config;
pub mod economics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod montecarlo;
pub mod solver;

pub use error::{Error, Result};
