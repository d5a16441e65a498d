//! Record linkage for heterogeneous spatial-tabular databases.
//!
//! The pipeline ingests delimited-text databases into a uniform [`Record`]
//! model, enumerates candidate pairs, asks a chat-completion endpoint to
//! label them, trains a native pairwise matcher on those labels, and scores
//! the result with match, non-match and macro-averaged F1. Matches are
//! closed transitively into site clusters, and a quadratic runtime law is
//! fitted for extrapolating inference cost.
//!
//! Data-parallel loops (pair enumeration, feature extraction, batch
//! prediction, sweep grid points) run on rayon when the default `parallel`
//! feature is enabled and fall back to plain iterators otherwise. See
//! [`exec::Exec`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod llm_labeler;
pub mod matcher;
pub mod pairing;
pub mod records;
pub mod runtime_model;
pub mod serialize;
pub mod synthetic;

pub use error::{Error, Result};
pub use pairing::{LabeledPair, PairKey, Provenance};
pub use records::{Dataset, Record, SchemaConfig};
