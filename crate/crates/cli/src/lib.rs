//! Batch pipeline around the analytics core: configuration, run
//! orchestration, and deterministic report bundles. The `tapefacts` binary
//! is a thin wrapper over these modules.

pub mod config;
pub mod pipeline;
pub mod report;
