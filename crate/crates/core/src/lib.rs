//! Interpretability toolkit for Mixture-of-Experts transformers.
//!
//! The [`model`] module provides a small traced MoE transformer with
//! planted-weight constructors. The analysis modules work on its traces:
//! [`probing`] (k-sparse probes), [`attribution`] (logit lens, direct logit
//! attribution, trigger-target runs), [`specialization`] (cluster
//! distributions and Jensen-Shannon scores) and [`autointerp`] (LLM-driven
//! expert labels). [`corpus`] handles tokenization and concept labels.

pub mod error;
pub mod attribution;
pub mod autointerp;
pub mod corpus;
pub mod linalg;
pub mod model;
pub mod probing;
pub mod protocol;
pub mod specialization;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
