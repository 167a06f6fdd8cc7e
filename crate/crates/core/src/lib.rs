//! Behavioral models for hybrid production systems.
//!
//! Continuous signals are cut into sliding-window snapshots and discretized
//! by a deep belief net; the resulting binary codes, merged with the native
//! discrete signals, drive a timed automaton. New cycles are replayed through
//! the automaton and flagged when they leave its learned behavior.

pub mod automaton;
pub mod datagen;
pub mod dbn;
pub mod pipeline;
pub mod rbm;
pub mod rng;
pub mod signals;

pub use rng::RngStream;
