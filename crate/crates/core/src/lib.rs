//! Trade-tape analytics: intraday return series in clock time and event time,
//! estimator primitives, eleven stylized-fact test batteries, and synthetic
//! tape generators for Monte-Carlo null bands and positive controls.
//!
//! The crate is organized bottom-up:
//!
//! - [`tape`]: trade records, CSV/binary tape formats, session filtering,
//!   descriptive tape statistics. Timestamps are integer nanoseconds in
//!   exchange-local time; no floating-point time anywhere in this layer.
//! - [`series`]: bucketed price series (last-trade price, forward fill) and
//!   log-return series for both bucketing clocks, plus the two-stage
//!   volatility normalization.
//! - [`stats`]: scalar estimators (correlation, moments, quantiles, Fano
//!   factor, Rogers-Satchell range volatility, log-log power-law fits).
//!   All moments are population moments and all reductions use compensated
//!   summation.
//! - [`facts`]: the eleven fact analyzers producing lag/scale curves, and the
//!   verdict rules that grade them against noise bands.
//! - [`synth`]: white-noise and volatility-clustering tape generators, and
//!   the replicate machinery that turns them into pointwise null envelopes.
//!
//! Numeric code is generic over the scalar type via the [`Scalar`] trait;
//! [`Real`] (`f64`) is the concrete type used by every container default and
//! by the shipped binary.

pub mod facts;
pub mod numeric;
pub mod scalar;
pub mod series;
pub mod stats;
pub mod synth;
pub mod tape;

pub use scalar::Scalar;

/// Concrete scalar used throughout the shipped pipeline.
pub type Real = f64;

/// Nanoseconds per second, the resolution of every tape timestamp.
pub const NS_PER_SEC: i64 = 1_000_000_000;

/// Nanoseconds per minute.
pub const NS_PER_MIN: i64 = 60 * NS_PER_SEC;

/// Nanoseconds per calendar day.
pub const NS_PER_DAY: i64 = 24 * 60 * NS_PER_MIN;
