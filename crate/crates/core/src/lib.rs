//! Contrastive auditing of behavioral differences between a base model and
//! an intervention model: paired generation over semantic contexts,
//! blinded discriminative validation under FDR control, and consolidation
//! of validated difference hypotheses into a report. Every model call can
//! be recorded and replayed, making full runs deterministic and offline.

pub mod config;
pub mod consolidate;
pub mod corpus;
pub mod embedcluster;
pub mod error;
pub mod genpair;
pub mod harness;
pub mod hypothesis;
pub mod kmeans;
pub mod llmclient;
pub mod pipeline;
pub mod report;
pub mod seeding;
pub mod statcore;
pub mod synthetic;
pub mod templates;
pub mod validate;

pub use error::{Error, Result};
