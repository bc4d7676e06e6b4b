//! Quality scorers.
//!
//! A [`Scorer`] maps `(source, hypothesis)` pairs to real numbers, higher
//! meaning better. Only comparisons between scores are ever used, so the
//! scale is up to the scorer.

mod cache;
pub mod http;
pub mod wire;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::chrf;
use crate::text::{tokenize, TokenizerMode};

pub use cache::{cached_score_batch, CacheStats, CachedScorer, ScoreCache};
pub use http::{http_score_batch, HttpScorer, HttpScorerConfig, SCORER_URL_ENV};

/// One hypothesis to score against its source sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub source: String,
    pub hypothesis: String,
}

impl ScoreRequest {
    pub fn new(source: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            hypothesis: hypothesis.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    /// The transport kept failing after every retry.
    #[error("transport failure on chunk {chunk} (first item {first_item}): {message}")]
    Transport {
        chunk: usize,
        first_item: usize,
        message: String,
    },
    /// The remote side answered, but not with a usable score list.
    #[error("protocol error on chunk {chunk} (first item {first_item}): {message}")]
    Protocol {
        chunk: usize,
        first_item: usize,
        message: String,
    },
    #[error("no reference known for source `{0}`")]
    UnknownSource(String),
    #[error("scorer returned {got} scores for {expected} requests")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Other(String),
}

impl ScoreError {
    /// Index, within the submitted batch, of the first request the failure
    /// can be attributed to.
    pub fn item_offset(&self) -> Option<usize> {
        match self {
            ScoreError::Transport { first_item, .. } | ScoreError::Protocol { first_item, .. } => Some(*first_item),
            _ => None,
        }
    }
}

/// A batch quality scorer.
///
/// Implementations must be deterministic and return exactly one score per
/// request, in request order. They must also tolerate concurrent calls; a
/// scorer that cannot should implement [`SerialScorer`] and be wrapped in
/// [`Serialized`].
pub trait Scorer: Send + Sync {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        (**self).score_batch(requests)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        (**self).score_batch(requests)
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        (**self).score_batch(requests)
    }
}

/// A scorer that needs exclusive access while scoring.
pub trait SerialScorer: Send {
    fn score_batch_mut(&mut self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError>;
}

/// Serializes calls into a [`SerialScorer`].
#[derive(Debug)]
pub struct Serialized<S>(Mutex<S>);

impl<S> Serialized<S> {
    pub fn new(inner: S) -> Self {
        Self(Mutex::new(inner))
    }
}

impl<S: SerialScorer> Scorer for Serialized<S> {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        let mut guard = self
            .0
            .lock()
            .map_err(|_| ScoreError::Other("serialized scorer mutex poisoned".into()))?;
        guard.score_batch_mut(requests)
    }
}

pub(crate) fn check_len(expected: usize, scores: &[f64]) -> Result<(), ScoreError> {
    if scores.len() != expected {
        return Err(ScoreError::LengthMismatch {
            expected,
            got: scores.len(),
        });
    }
    Ok(())
}

/// Reference-free lexical stand-in for a neural QE model.
///
/// Harmonic mean of source-token coverage (case-insensitive) and the token
/// length ratio `min(|hyp|, |src|) / max(|hyp|, |src|)`.
pub fn lexical_qe_score(req: &ScoreRequest) -> f64 {
    let src = tokenize(&req.source, TokenizerMode::Whitespace);
    let hyp = tokenize(&req.hypothesis, TokenizerMode::Whitespace);
    if hyp.is_empty() || src.is_empty() {
        return 0.0;
    }
    let hyp_lower: std::collections::HashSet<String> = hyp.iter().map(|t| t.to_lowercase()).collect();
    let covered = src.iter().filter(|t| hyp_lower.contains(&t.to_lowercase())).count();
    let coverage = covered as f64 / src.len() as f64;
    let ratio = src.len().min(hyp.len()) as f64 / src.len().max(hyp.len()) as f64;
    if coverage + ratio == 0.0 {
        0.0
    } else {
        2.0 * coverage * ratio / (coverage + ratio)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalQe;

impl Scorer for LexicalQe {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        Ok(requests.iter().map(lexical_qe_score).collect())
    }
}

/// Scores hypotheses by ChrF against a hidden reference, scaled to `[0, 1]`.
///
/// Emulates a QE metric that agrees closely with the truth. The source field
/// only selects which reference applies.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    references: OracleRefs,
}

#[derive(Debug, Clone)]
enum OracleRefs {
    Single(String),
    BySource(HashMap<String, String>),
}

impl OracleScorer {
    /// One reference for every request, whatever its source.
    pub fn new(reference: impl Into<String>) -> Self {
        Self {
            references: OracleRefs::Single(reference.into()),
        }
    }

    /// A reference per source sentence.
    ///
    /// Fails when one source is paired with two different references, since
    /// requests (and cache keys) could not tell them apart.
    pub fn from_pairs<I, S, R>(pairs: I) -> crate::Result<Self>
    where
        I: IntoIterator<Item = (S, R)>,
        S: Into<String>,
        R: Into<String>,
    {
        let mut map = HashMap::new();
        for (source, reference) in pairs {
            let (source, reference) = (source.into(), reference.into());
            match map.get(&source) {
                Some(existing) if existing != &reference => {
                    return Err(crate::Error::contract(format!(
                        "source `{source}` has conflicting references"
                    )));
                }
                Some(_) => {}
                None => {
                    map.insert(source, reference);
                }
            }
        }
        Ok(Self {
            references: OracleRefs::BySource(map),
        })
    }

    /// Reference-backed oracle over every pool that carries a reference.
    pub fn from_pools(pools: &[crate::CandidatePool]) -> crate::Result<Self> {
        let mut pairs = Vec::with_capacity(pools.len());
        for pool in pools {
            let reference = pool
                .reference
                .as_deref()
                .ok_or_else(|| crate::Error::contract(format!("pool `{}` has no reference", pool.id)))?;
            pairs.push((pool.source.clone(), reference.to_owned()));
        }
        Self::from_pairs(pairs)
    }

    fn reference_for<'a>(&'a self, source: &str) -> Result<&'a str, ScoreError> {
        match &self.references {
            OracleRefs::Single(r) => Ok(r),
            OracleRefs::BySource(map) => map
                .get(source)
                .map(String::as_str)
                .ok_or_else(|| ScoreError::UnknownSource(source.to_owned())),
        }
    }
}

/// Single-reference oracle scorer.
pub fn oracle_scorer(reference: impl Into<String>) -> OracleScorer {
    OracleScorer::new(reference)
}

impl Scorer for OracleScorer {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        requests
            .iter()
            .map(|r| Ok(chrf(&r.hypothesis, self.reference_for(&r.source)?) / 100.0))
            .collect()
    }
}

/// Counts the items and calls that reach the wrapped scorer.
#[derive(Debug, Default)]
pub struct CountingScorer<S> {
    inner: S,
    items: AtomicU64,
    calls: AtomicU64,
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            items: AtomicU64::new(0),
            calls: AtomicU64::new(0),
        }
    }

    pub fn items(&self) -> u64 {
        self.items.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.items.store(0, Ordering::SeqCst);
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.items.fetch_add(requests.len() as u64, Ordering::SeqCst);
        self.inner.score_batch(requests)
    }
}
