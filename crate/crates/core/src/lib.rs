//! Picture-word interference evaluation for image-text embedding models.
//!
//! The harness superimposes written words on pictures, classifies the
//! resulting stimuli zero-shot through a pluggable embedding provider, and
//! measures how often the written word flips the prediction. Around that
//! core sit the analyses used to interpret the flips: semantic and spelling
//! similarity between labels and words, and representational similarity
//! analysis over image embeddings.
//!
//! Module map:
//!
//! * [`corpus`] – image manifests, label taxonomy, word lists, trial plans
//! * [`stimulus`] – deterministic red-word rendering onto PNG images
//! * [`provider`] – embedding providers (synthetic and JSON-lines subprocess)
//! * [`zeroshot`] – prompt templates and cosine/softmax classification
//! * [`metrics`] – switching rate, Jaro-Winkler, word vectors, similarity splits
//! * [`rsa`] – dissimilarity matrices and their comparison
//! * [`report`] – deterministic CSV/JSON artifacts
//! * [`config`] / [`pipeline`] – run configuration and orchestration

pub mod config;
pub mod corpus;
pub mod metrics;
pub mod pipeline;
pub mod provider;
pub mod report;
pub mod rsa;
pub mod stimulus;
mod text;
pub mod zeroshot;

pub use text::normalize_label;

/// Version string recorded in every report header.
pub const TOOL_VERSION: &str = concat!("pwi-bench ", env!("CARGO_PKG_VERSION"));
