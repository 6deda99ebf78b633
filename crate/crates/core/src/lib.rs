//! Tri-agent recursive validation engine.
//!
//! A knowledge state passes through three validation stages per cycle
//! (semantic, analytical, transparency). The crate provides the state space,
//! stage operators, convergence tracking, contradiction seeding, metrics,
//! the trial runner and the external adapter protocol.

pub mod adapter;
pub mod config;
pub mod convergence;
pub mod error;
pub mod linalg;
pub mod lipschitz;
pub mod metrics;
pub mod operators;
pub mod record;
pub mod runner;
pub mod scenario;
pub mod seeding;
pub mod state;

pub use error::{Error, Result};
