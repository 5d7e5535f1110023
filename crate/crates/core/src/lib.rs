//! Economics of trading bandwidth for latency, and a racing DNS resolver to
//! measure one such trade.
//!
//! - [`economics`]: cost and value rates, break-even thresholds, incentive
//!   models, and the plan/value catalog.
//! - [`codec`]: the slice of the DNS wire format the resolver needs.
//! - [`resolver`]: ranks upstream servers and races each lookup across the
//!   first `k` of them, accounting every byte.
//! - [`simulator`]: seeded, virtual-time upstreams for reproducible runs.
//! - [`experiment`]: randomized trials, per-level aggregation, and the
//!   normalized/incremental savings analysis.

pub mod codec;
pub mod economics;
pub mod experiment;
pub mod resolver;
pub mod simulator;
pub mod stats;
