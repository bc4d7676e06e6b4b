use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::{check_len, ScoreError, ScoreRequest, Scorer};

// source -> hypothesis -> score; nested so lookups can borrow.
type Entries = HashMap<String, HashMap<String, f64>>;

/// Memoized scores keyed by the exact `(source, hypothesis)` strings.
///
/// Reads are concurrent. Two threads missing on the same key may both
/// compute it; the values agree because scorers are deterministic.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<Entries>,
    hits: AtomicU64,
    misses: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, req: &ScoreRequest) -> Option<f64> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        lookup(&entries, req)
    }

    pub fn len(&self) -> usize {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(HashMap::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits(),
            misses: self.misses(),
            entries: self.len(),
        }
    }
}

fn lookup(entries: &Entries, req: &ScoreRequest) -> Option<f64> {
    entries.get(&req.source)?.get(&req.hypothesis).copied()
}

/// Scores `requests` through `cache`, asking `inner` only for unseen pairs.
///
/// `inner` is called at most once, with each missing pair exactly once, in
/// first-occurrence order. Nothing is cached if `inner` fails.
pub fn cached_score_batch<S: Scorer + ?Sized>(
    cache: &ScoreCache,
    inner: &S,
    requests: &[ScoreRequest],
) -> Result<Vec<f64>, ScoreError> {
    enum Slot {
        Known(f64),
        Pending(usize),
    }

    let mut slots = Vec::with_capacity(requests.len());
    let mut missing: Vec<ScoreRequest> = Vec::new();
    let mut pending: HashMap<&ScoreRequest, usize> = HashMap::new();
    {
        let entries = cache.entries.read().unwrap_or_else(|e| e.into_inner());
        for req in requests {
            if let Some(score) = lookup(&entries, req) {
                slots.push(Slot::Known(score));
            } else if let Some(&idx) = pending.get(req) {
                slots.push(Slot::Pending(idx));
            } else {
                pending.insert(req, missing.len());
                slots.push(Slot::Pending(missing.len()));
                missing.push(req.clone());
            }
        }
    }

    let fresh = if missing.is_empty() {
        Vec::new()
    } else {
        let scores = inner.score_batch(&missing)?;
        check_len(missing.len(), &scores)?;
        scores
    };

    if !missing.is_empty() {
        let mut entries = cache.entries.write().unwrap_or_else(|e| e.into_inner());
        for (req, &score) in missing.into_iter().zip(&fresh) {
            entries
                .entry(req.source)
                .or_default()
                .entry(req.hypothesis)
                .or_insert(score);
        }
    }
    cache.misses.fetch_add(fresh.len() as u64, Ordering::SeqCst);
    cache
        .hits
        .fetch_add((requests.len() - fresh.len()) as u64, Ordering::SeqCst);

    Ok(slots
        .into_iter()
        .map(|slot| match slot {
            Slot::Known(score) => score,
            Slot::Pending(idx) => fresh[idx],
        })
        .collect())
}

/// A scorer routed through a shared [`ScoreCache`].
#[derive(Debug)]
pub struct CachedScorer<S> {
    inner: S,
    cache: Arc<ScoreCache>,
}

impl<S> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        Self::with_cache(inner, Arc::new(ScoreCache::new()))
    }

    pub fn with_cache(inner: S, cache: Arc<ScoreCache>) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &Arc<ScoreCache> {
        &self.cache
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
        cached_score_batch(&self.cache, &self.inner, requests)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{CountingScorer, LexicalQe};
    use proptest::prelude::*;

    fn req(h: &str) -> ScoreRequest {
        ScoreRequest::new("a b c", h)
    }

    #[test]
    fn duplicate_within_batch_scored_once() {
        let cache = ScoreCache::new();
        let inner = CountingScorer::new(LexicalQe);
        let out = cached_score_batch(&cache, &inner, &[req("a b"), req("a b")]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(inner.items(), 1);
        assert_eq!(
            cache.stats(),
            CacheStats {
                hits: 1,
                misses: 1,
                entries: 1
            }
        );
    }

    #[test]
    fn repeated_batch_is_free() {
        let cache = ScoreCache::new();
        let inner = CountingScorer::new(LexicalQe);
        let batch = [req("a"), req("b"), req("c")];
        let first = cached_score_batch(&cache, &inner, &batch).unwrap();
        let hits_before = cache.hits();
        let calls_before = inner.calls();
        let second = cached_score_batch(&cache, &inner, &batch).unwrap();
        assert_eq!(first, second);
        assert_eq!(inner.calls(), calls_before);
        assert_eq!(cache.hits(), hits_before + 3);
    }

    #[test]
    fn mixed_batch_forwards_only_misses() {
        let cache = ScoreCache::new();
        let inner = CountingScorer::new(LexicalQe);
        cached_score_batch(&cache, &inner, &[req("a"), req("b")]).unwrap();
        inner.reset();
        let batch = [req("a"), req("x"), req("b"), req("y"), req("z")];
        cached_score_batch(&cache, &inner, &batch).unwrap();
        assert_eq!(inner.calls(), 1);
        assert_eq!(inner.items(), 3);
    }

    struct Failing;

    impl Scorer for Failing {
        fn score_batch(&self, _: &[ScoreRequest]) -> Result<Vec<f64>, ScoreError> {
            Err(ScoreError::Other("boom".into()))
        }
    }

    #[test]
    fn failure_does_not_poison_cache() {
        let cache = ScoreCache::new();
        assert!(cached_score_batch(&cache, &Failing, &[req("a")]).is_err());
        assert!(cache.is_empty());
        let out = cached_score_batch(&cache, &LexicalQe, &[req("a")]).unwrap();
        assert_eq!(out, LexicalQe.score_batch(&[req("a")]).unwrap());
    }

    #[test]
    fn source_is_part_of_the_key() {
        let cache = ScoreCache::new();
        let a = ScoreRequest::new("x", "x");
        let b = ScoreRequest::new("y", "x");
        let out = cached_score_batch(&cache, &LexicalQe, &[a, b]).unwrap();
        assert_eq!(out, [1.0, 0.0]);
        assert_eq!(cache.len(), 2);
    }

    proptest! {
        #[test]
        fn transparent_and_counts_distinct_pairs(
            stream in proptest::collection::vec(
                proptest::collection::vec(("[ab]{1,2}", "[abc ]{0,4}"), 0..6), 1..5)
        ) {
            let cache = ScoreCache::new();
            let inner = CountingScorer::new(LexicalQe);
            let mut distinct = std::collections::HashSet::new();
            for batch in &stream {
                let reqs: Vec<_> = batch.iter().map(|(s, h)| ScoreRequest::new(s.clone(), h.clone())).collect();
                distinct.extend(reqs.iter().cloned());
                let cached = cached_score_batch(&cache, &inner, &reqs).unwrap();
                prop_assert_eq!(cached, LexicalQe.score_batch(&reqs).unwrap());
            }
            prop_assert_eq!(inner.items() as usize, distinct.len());
        }
    }
}
