//! Utterance-level speech severity assessment.
//!
//! The pipeline: rating manifests go through split construction
//! ([`corpus`]), waveforms through a pluggable encoder into mean-pooled
//! embeddings ([`encoder`]), a two-layer regression head scores them
//! ([`model`]), and three training paradigms (in-domain, fine-tuning, joint
//! training with affine score alignment from [`scale`]) optimize it
//! ([`train`]). Evaluation reports MSE/LCC/SRCC ([`metrics`]) and results
//! render as per-encoder grids ([`report`]). A deterministic synthetic
//! fixture ([`fixture`]) exercises everything without licensed data.

pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod fixture;
pub mod metrics;
pub mod model;
pub mod report;
pub mod scale;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
