//! Diagnostics over per-token cross-entropy loss distributions.
//!
//! The crate is organised by analysis:
//!
//! - [`loss_store`]: binary/text loss dumps, checkpoint manifests, metric files.
//! - [`quantiles`]: exact and sketched percentile summaries.
//! - [`concordance`]: agreement of several summaries on checkpoint pair orderings.
//! - [`shape`]: robustly standardized percentile profiles and loss-band masses.
//! - [`correlate`]: correlation sweeps, selection rules, trajectories, pass@k intervals.
//! - [`distill`]: a tabular bigram teacher/student lab for top-K distillation.

pub mod concordance;
pub mod correlate;
pub mod distill;
pub mod error;
pub mod format;
pub mod loss_store;
pub mod quantiles;
pub mod shape;

pub use error::{Error, Result};
pub use loss_store::{CheckpointMeta, LossVector, Manifest};
pub use quantiles::{QuantileSketch, SummaryName, SummarySet};
