//! Supervised validation sessions.
//!
//! [`engine`] holds the session state machine, [`log`] the append-only audit
//! log and its replay, and [`service`] exposes sessions over HTTP with a
//! server-sent event stream.

pub mod engine;
pub mod error;
pub mod log;
pub mod prompts;
pub mod service;
pub mod supervisor;

pub use error::BridgeError;
