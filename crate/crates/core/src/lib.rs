//! Adaptive Neyman allocation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`analytics`]: outcome schedules, finite-population moments and the
//!   closed-form Neyman quantities (optimal probability, variance, regret).
//! - [`designs`]: sequential treatment-probability policies (Clip-OGD,
//!   Bernoulli, Explore-then-Commit, the Neyman oracle) behind one trait.
//! - [`estimators`]: the adaptive Horvitz–Thompson estimator, the
//!   variance-bound estimator and Chebyshev / Wald intervals.
//! - [`oracle`]: exact evaluation of a policy by walking all `2^T`
//!   assignment paths.
//! - [`simulation`]: seeded, order-independent Monte Carlo replications.
//! - [`data`]: CSV ingestion, imputation, normalisation and synthetic
//!   schedule generators.
//!
//! All randomness flows through [`rng::Stream`], a ChaCha8 stream keyed by
//! `(seed, stream id)`, so every replication is reproducible on its own.

pub mod analytics;
pub mod data;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod normal;
pub mod oracle;
pub mod rng;
pub mod simulation;

pub use analytics::{FiniteStats, MomentBounds, NeymanSummary, OutcomeSchedule};
pub use designs::{Design, Policy, PolicySpec};
pub use error::{Error, Result};
pub use estimators::{EffectEstimate, IntervalEstimate, IntervalKind, Trace};
pub use oracle::ExactResults;
pub use simulation::{SimConfig, SimSummary};

/// Version tag written into every serialized report.
pub const SPEC_VERSION: &str = "1";
