//! Mean-field traffic routing under a log-population toll.
//!
//! The equilibrium of the large-population game is the optimal policy of a
//! KL control problem, found by one linear backward recursion
//! ([`kl_solver`]). The other modules check it from several sides: the
//! equalizer property of the mean-field cost ([`mean_field`]), the exact
//! finite-N toll expectations and ε-Nash gap ([`finite_population`]),
//! fictitious play on the single-stage route game ([`fictitious_play`]) and
//! the exact finite-N symmetric equilibrium of that game
//! ([`symmetric_equilibrium`]).

pub mod cli;
pub mod error;
pub mod fictitious_play;
pub mod finite_population;
pub mod kl_solver;
pub mod mean_field;
pub mod numerics;
pub mod sampling;
pub mod scenario;
pub mod symmetric_equilibrium;

pub use error::{Error, Result};
