//! Leaderboard service and reader study for the k-space reconstruction benchmark.
//!
//! - [`split`]: seeded case-level dataset splits.
//! - [`protocol`]: score cards, the event log's events, ingest rules, ranking
//!   and finalist selection.
//! - [`log`]: the append-only JSON-lines event log.
//! - [`scoring`]: submission completeness and metric reports.
//! - [`study`]: blinded reader-study plans, response validation and aggregation.
//! - [`service`] / [`server`]: the single-writer service and its HTTP API.

pub mod dataset;
pub mod error;
pub mod log;
pub mod protocol;
pub mod render;
pub mod scoring;
pub mod server;
pub mod service;
pub mod split;
pub mod study;

pub use error::{EvalError, Result};
