//! Pipeline for screening depression severity from dyadic interview sessions.
//!
//! The crate ingests a corpus of timed transcripts with modality side-channels
//! (acoustic windows, facial action units, laughter events), extracts numeric
//! session features, renders them into text narratives, trains regression-tree
//! and hierarchical-attention-network models against PHQ labels, evaluates the
//! models under a cumulative ablation protocol with the concordance correlation
//! coefficient, and emits attention-weight visualizations of the conversation.

pub mod clients;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
pub mod han;
pub mod model;
pub mod narrative;
pub mod numwords;
pub mod synth;
pub mod tree;
pub mod viz;

pub use error::{Error, Result};
