//! Survival analysis for two-arm trials in which control patients may switch
//! onto the experimental treatment after disease progression.
//!
//! Switching dilutes the between-arm contrast late in follow-up, and the
//! ordinary log-rank test loses power against it. The centerpiece here is a
//! weighted log-rank test whose weight function is derived from a three-state
//! exponential switching model and is fixed at design time: it depends only on
//! assumed medians and an assumed switch probability, never on the observed
//! data, so the test keeps its size under the null.
//!
//! The crate provides:
//!
//! - [`model`]: the switching model itself (state occupancies, control-arm
//!   survival and hazard, hazard ratio, and the log-hazard-ratio weights);
//! - [`survdata`]: dataset ingestion, risk tables, Kaplan-Meier curves, and
//!   restricted-mean survival;
//! - [`hypotests`]: the weighted log-rank family, Fleming-Harrington tests,
//!   a four-component max-combo test, and the RMST difference test;
//! - [`mvn`]: the multivariate-normal rectangle probability used by max-combo;
//! - [`sim`]: a trial simulator with event-count-driven cutoff;
//! - [`harness`]: Monte Carlo power studies comparing the tests.

pub mod error;
pub mod harness;
pub mod hypotests;
pub mod model;
pub mod mvn;
pub mod sim;
pub mod survdata;

pub use error::{Error, Result};
