//! Bias detection from per-article word co-occurrence graphs.
//!
//! The pipeline runs corpus ingestion, graph construction, Weisfeiler-Lehman
//! relabeling, paragraph-vector embedding and softmax classification, with
//! evaluation helpers for paired comparisons across seeds.

pub mod corpus;
pub mod detector;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod graph_metrics;
pub mod par;
pub mod stats;
pub mod synth;
pub mod wl;

pub use error::{Error, Result};
pub use par::Exec;
