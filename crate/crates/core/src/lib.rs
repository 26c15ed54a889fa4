//! Structural outlier detection for network configuration snapshots.
//!
//! The pipeline: ingest configs into a [`ingest::NetworkSnapshot`], extract
//! typed [`properties::Property`] values, encode them as fixed-schema
//! vectors, mine per-kind signatures, and flag properties that deviate from
//! their signature. Findings are severity-ranked and can be refined through
//! an event-sourced retuning log.

pub mod detectors;
pub mod encoder;
pub mod eval;
pub mod grammar;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod properties;
pub mod report;
pub mod retune;
pub mod severity;
pub mod signatures;
pub mod stats;
