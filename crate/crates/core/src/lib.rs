//! Candidate fusion for machine translation.
//!
//! Given a pool of candidate translations for one source sentence, the
//! fusion search picks the best-scoring candidate as a skeleton, finds the
//! token spans where the rest of the pool disagrees with it, and runs a
//! small beam search over span substitutions guided by a quality scorer.
//! The crate also ships the reranking baselines it is compared against
//! (QE-reranking and MBR), surface metrics, pool-diversity measures and a
//! call-accounting benchmark harness.

pub mod bench;
pub mod diff;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod rerank;
pub mod scoring;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use text::{CandidatePool, TokenSeq};
