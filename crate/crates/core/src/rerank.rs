//! Reranking baselines: QE-reranking (best-of-n) and MBR decoding.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::metrics::{chrf, sentence_bleu, BleuConfig};
use crate::scoring::{check_len, ScoreRequest, Scorer};
use crate::{CandidatePool, Result};

/// Similarity of a hypothesis to a pseudo-reference, higher is better.
pub trait Utility: Send + Sync {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64;
}

impl<U: Utility + ?Sized> Utility for &U {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64 {
        (**self).utility(hypothesis, pseudo_reference)
    }
}

impl<U: Utility + ?Sized> Utility for Box<U> {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64 {
        (**self).utility(hypothesis, pseudo_reference)
    }
}

/// Sentence BLEU scaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BleuUtility {
    pub config: BleuConfig,
}

impl Utility for BleuUtility {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64 {
        sentence_bleu(hypothesis, pseudo_reference, &self.config) / 100.0
    }
}

/// ChrF scaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChrfUtility;

impl Utility for ChrfUtility {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64 {
        chrf(hypothesis, pseudo_reference) / 100.0
    }
}

/// Counts utility evaluations.
#[derive(Debug, Default)]
pub struct CountingUtility<U> {
    inner: U,
    calls: AtomicU64,
}

impl<U> CountingUtility<U> {
    pub fn new(inner: U) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<U: Utility> Utility for CountingUtility<U> {
    fn utility(&self, hypothesis: &str, pseudo_reference: &str) -> f64 {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.utility(hypothesis, pseudo_reference)
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v.total_cmp(&b).is_le() => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Best candidate by QE score, lowest index on ties.
///
/// Sends exactly one batch of `N` requests to `scorer`.
pub fn qe_rerank(pool: &CandidatePool, scorer: &dyn Scorer) -> Result<(usize, f64)> {
    pool.ensure_non_empty()?;
    let requests: Vec<ScoreRequest> = pool
        .candidates
        .iter()
        .map(|c| ScoreRequest::new(pool.source.clone(), c.clone()))
        .collect();
    let scores = scorer.score_batch(&requests)?;
    check_len(requests.len(), &scores)?;
    Ok(argmax(&scores).expect("pool is non-empty"))
}

/// Minimum Bayes risk selection with every other candidate as a
/// pseudo-reference.
///
/// Expected utility of candidate `i` is the mean of `u(y_i, y_j)` over
/// `j != i`, giving exactly `N(N-1)` utility calls. A single candidate is
/// returned with expected utility 0.
pub fn mbr(pool: &CandidatePool, utility: &dyn Utility) -> Result<(usize, f64)> {
    pool.ensure_non_empty()?;
    let n = pool.len();
    if n == 1 {
        return Ok((0, 0.0));
    }
    let expected: Vec<f64> = pool
        .candidates
        .iter()
        .enumerate()
        .map(|(i, hyp)| {
            let total: f64 = pool
                .candidates
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, pseudo)| utility.utility(hyp, pseudo))
                .sum();
            total / (n - 1) as f64
        })
        .collect();
    Ok(argmax(&expected).expect("pool is non-empty"))
}
