//! Configuration synthesis for Time-Sensitive Networks with redundancy and
//! TESLA-authenticated streams.
//!
//! The crate takes a [`model::SystemModel`] (network plus applications),
//! produces disjoint redundant routes, picks a key-disclosure interval and
//! computes task and frame schedules, either with the exact branch-and-bound
//! solver in [`exact`] or with the simulated annealing engine in
//! [`annealer`]. [`verify`] re-checks any result independently.

pub mod annealer;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod heuristic;
pub mod model;
pub mod routing;
pub mod schedule;
pub mod tesla;
pub mod toolkit;
pub mod verify;

pub use error::{Error, Result};
