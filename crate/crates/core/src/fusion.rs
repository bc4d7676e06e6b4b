//! Candidate fusion.
//!
//! The best candidate under the scorer becomes the base hypothesis. Every
//! span where another candidate disagrees with it becomes a
//! [`DivergentSpanGroup`], and a beam search walks the groups left to
//! right, trying each alternative span (or keeping the base tokens) on top
//! of every hypothesis in the beam. Hypotheses are represented as
//! [`ChoiceVector`]s over the base skeleton and only turned into strings for
//! scoring and deduplication.
//!
//! Beam order is score descending, then choice vector ascending, with
//! keep-base ordered before the alternatives and alternatives in group
//! order. That order does not depend on how hypotheses were produced, so a
//! beam wide enough to hold every combination returns the first maximum in
//! lexicographic enumeration order.
//!
//! [`fuse_corpus`] advances all sentences in lockstep, one group per step,
//! and sends the hypotheses of every active sentence to the scorer as one
//! batch. Sentences drop out as soon as they run out of groups. Results are
//! identical to running [`fuse`] on each pool.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::diff::{find_divergent_spans, DivergentSpanGroup};
use crate::rerank::{argmax, qe_rerank};
use crate::scoring::{cached_score_batch, check_len, ScoreCache, ScoreError, ScoreRequest, Scorer};
use crate::text::{detokenize, tokenize, TokenSeq, TokenizerMode};
use crate::{CandidatePool, Error, Result};

pub const DEFAULT_BEAM_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub beam_size: usize,
    pub cache_enabled: bool,
    /// Only the first `max_groups` divergent groups are explored.
    pub max_groups: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            beam_size: DEFAULT_BEAM_SIZE,
            cache_enabled: true,
            max_groups: None,
        }
    }
}

impl FusionConfig {
    pub fn with_beam_size(mut self, beam_size: usize) -> Self {
        self.beam_size = beam_size;
        self
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache_enabled = enabled;
        self
    }

    pub fn with_max_groups(mut self, max_groups: Option<usize>) -> Self {
        self.max_groups = max_groups;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::contract("beam size must be at least 1"));
        }
        Ok(())
    }
}

/// What to put at one divergent group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Keep,
    Alt(usize),
}

/// One [`Choice`] per group, for a prefix of the sorted groups.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChoiceVector(pub Vec<Choice>);

impl ChoiceVector {
    pub fn keep_all(groups: usize) -> Self {
        Self(vec![Choice::Keep; groups])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_keep_all(&self) -> bool {
        self.0.iter().all(|c| *c == Choice::Keep)
    }

    fn extended(&self, choice: Choice) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(choice);
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    /// Divergent groups explored.
    pub groups: usize,
    /// Hypotheses this sentence needed scores for. With caching, repeated
    /// hypotheses are counted once.
    pub hypotheses_scored: usize,
    /// Requests for hypotheses this sentence had already scored.
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub output: String,
    pub score: f64,
    pub base_index: usize,
    pub chosen: ChoiceVector,
    pub stats: FusionStats,
}

/// Best candidate by QE score, lowest index on ties.
pub fn select_base(pool: &CandidatePool, scorer: &dyn Scorer) -> Result<(usize, f64)> {
    qe_rerank(pool, scorer)
}

/// Base tokens and divergent groups of `pool` relative to candidate `base_index`.
pub fn divergent_groups(pool: &CandidatePool, base_index: usize) -> (TokenSeq, Vec<DivergentSpanGroup>) {
    let base = tokenize(&pool.candidates[base_index], TokenizerMode::Whitespace);
    let others: Vec<TokenSeq> = pool
        .candidates
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != base_index)
        .map(|(_, c)| tokenize(c, TokenizerMode::Whitespace))
        .collect();
    let groups = find_divergent_spans(&base, &others);
    (base, groups)
}

/// Splices the chosen alternatives into `base`.
///
/// `choice` applies to `groups[..choice.len()]`; the remaining groups keep
/// their base tokens.
pub fn materialize(base: &TokenSeq, groups: &[DivergentSpanGroup], choice: &ChoiceVector) -> Result<TokenSeq> {
    if choice.len() > groups.len() {
        return Err(Error::contract(format!(
            "{} choices for {} groups",
            choice.len(),
            groups.len()
        )));
    }
    let mut tokens: Vec<String> = base.tokens().to_vec();
    for (group, c) in groups.iter().zip(&choice.0).rev() {
        if let Choice::Alt(j) = *c {
            let alt = group.alternatives.get(j).ok_or_else(|| {
                Error::contract(format!(
                    "alternative {j} out of range for group {:?}",
                    group.base_range()
                ))
            })?;
            if group.end > tokens.len() || group.start > group.end {
                return Err(Error::contract("group range outside the base"));
            }
            tokens.splice(group.start..group.end, alt.iter().cloned());
        }
    }
    Ok(TokenSeq::from_tokens(tokens))
}

#[derive(Debug, Clone)]
struct Hyp {
    choice: ChoiceVector,
    text: String,
    score: f64,
}

fn beam_order(a: &Hyp, b: &Hyp) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.choice.cmp(&b.choice))
}

enum Phase {
    SelectBase,
    Expand,
    Done,
}

/// Per-sentence search state, advanced one scoring round at a time.
struct Search<'a> {
    pool: &'a CandidatePool,
    beam_size: usize,
    max_groups: Option<usize>,
    dedup_stats: bool,
    phase: Phase,
    base_index: usize,
    base: TokenSeq,
    groups: Vec<DivergentSpanGroup>,
    step: usize,
    beam: Vec<Hyp>,
    pending: Vec<Hyp>,
    seen: HashSet<String>,
    stats: FusionStats,
}

impl<'a> Search<'a> {
    fn new(pool: &'a CandidatePool, config: &FusionConfig) -> Result<Self> {
        pool.ensure_non_empty()?;
        Ok(Self {
            pool,
            beam_size: config.beam_size,
            max_groups: config.max_groups,
            dedup_stats: config.cache_enabled,
            phase: Phase::SelectBase,
            base_index: 0,
            base: TokenSeq::new(),
            groups: Vec::new(),
            step: 0,
            beam: Vec::new(),
            pending: Vec::new(),
            seen: HashSet::new(),
            stats: FusionStats::default(),
        })
    }

    fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    /// Builds the next set of hypotheses and returns their score requests.
    fn next_requests(&mut self) -> Result<Vec<ScoreRequest>> {
        self.pending = match self.phase {
            Phase::SelectBase => self
                .pool
                .candidates
                .iter()
                .map(|c| Hyp {
                    choice: ChoiceVector::default(),
                    text: c.clone(),
                    score: f64::NAN,
                })
                .collect(),
            Phase::Expand => self.expand()?,
            Phase::Done => Vec::new(),
        };
        for hyp in &self.pending {
            if !self.dedup_stats || self.seen.insert(hyp.text.clone()) {
                self.stats.hypotheses_scored += 1;
            } else {
                self.stats.cache_hits += 1;
            }
        }
        Ok(self
            .pending
            .iter()
            .map(|h| ScoreRequest::new(self.pool.source.clone(), h.text.clone()))
            .collect())
    }

    /// Extends every beam entry at the current group with keep-base and with
    /// each alternative, deduplicating by surface string.
    fn expand(&self) -> Result<Vec<Hyp>> {
        let group = &self.groups[self.step];
        let active = &self.groups[..=self.step];
        let mut out: Vec<Hyp> = Vec::with_capacity(self.beam.len() * (group.alternatives.len() + 1));
        let mut index: HashMap<String, usize> = HashMap::new();

        let mut push = |out: &mut Vec<Hyp>, choice: ChoiceVector, text: String| match index.get(&text) {
            Some(&i) => {
                if choice < out[i].choice {
                    out[i].choice = choice;
                }
            }
            None => {
                index.insert(text.clone(), out.len());
                out.push(Hyp {
                    choice,
                    text,
                    score: f64::NAN,
                });
            }
        };

        for hyp in &self.beam {
            push(&mut out, hyp.choice.extended(Choice::Keep), hyp.text.clone());
        }
        for hyp in &self.beam {
            for j in 0..group.alternatives.len() {
                let choice = hyp.choice.extended(Choice::Alt(j));
                let text = detokenize(&materialize(&self.base, active, &choice)?);
                push(&mut out, choice, text);
            }
        }
        Ok(out)
    }

    fn absorb(&mut self, scores: &[f64]) -> Result<()> {
        check_len(self.pending.len(), scores)?;
        let mut scored = std::mem::take(&mut self.pending);
        for (hyp, &s) in scored.iter_mut().zip(scores) {
            hyp.score = s;
        }
        match self.phase {
            Phase::SelectBase => {
                let (base_index, _) = argmax(scores).expect("pool is non-empty");
                self.base_index = base_index;
                let (base, mut groups) = divergent_groups(self.pool, base_index);
                if let Some(cap) = self.max_groups {
                    groups.truncate(cap);
                }
                self.base = base;
                self.groups = groups;
                self.stats.groups = self.groups.len();
                self.beam = vec![scored.swap_remove(base_index)];
                self.phase = if self.groups.is_empty() {
                    Phase::Done
                } else {
                    Phase::Expand
                };
            }
            Phase::Expand => {
                scored.sort_by(beam_order);
                scored.truncate(self.beam_size);
                self.beam = scored;
                self.step += 1;
                if self.step == self.groups.len() {
                    self.phase = Phase::Done;
                }
            }
            Phase::Done => {}
        }
        Ok(())
    }

    fn finish(mut self) -> FusionResult {
        let best = self.beam.swap_remove(0);
        FusionResult {
            output: best.text,
            score: best.score,
            base_index: self.base_index,
            chosen: best.choice,
            stats: self.stats,
        }
    }
}

fn score_round(
    scorer: &dyn Scorer,
    cache: Option<&ScoreCache>,
    requests: &[ScoreRequest],
) -> std::result::Result<Vec<f64>, ScoreError> {
    let scores = match cache {
        Some(cache) => cached_score_batch(cache, scorer, requests)?,
        None => scorer.score_batch(requests)?,
    };
    check_len(requests.len(), &scores)?;
    Ok(scores)
}

fn run(
    pools: &[CandidatePool],
    scorer: &dyn Scorer,
    config: &FusionConfig,
    cache: Option<&ScoreCache>,
) -> Result<Vec<FusionResult>> {
    config.validate()?;
    let mut searches = pools
        .iter()
        .map(|p| Search::new(p, config))
        .collect::<Result<Vec<_>>>()?;

    loop {
        let mut batch: Vec<ScoreRequest> = Vec::new();
        let mut spans: Vec<(usize, Range<usize>)> = Vec::new();
        for (i, search) in searches.iter_mut().enumerate() {
            if search.is_done() {
                continue;
            }
            let requests = search.next_requests()?;
            spans.push((i, batch.len()..batch.len() + requests.len()));
            batch.extend(requests);
        }
        if spans.is_empty() {
            break;
        }

        let scores = score_round(scorer, cache, &batch).map_err(|source| {
            let culprit = source
                .item_offset()
                .and_then(|off| spans.iter().find(|(_, r)| r.contains(&off)))
                .unwrap_or(&spans[0])
                .0;
            Error::SentenceScore {
                id: pools[culprit].id.clone(),
                source,
            }
        })?;
        for (i, range) in spans {
            searches[i].absorb(&scores[range])?;
        }
    }

    Ok(searches.into_iter().map(Search::finish).collect())
}

/// Fuses one candidate pool.
pub fn fuse(pool: &CandidatePool, scorer: &dyn Scorer, config: &FusionConfig) -> Result<FusionResult> {
    let cache = config.cache_enabled.then(ScoreCache::new);
    let mut results = run(std::slice::from_ref(pool), scorer, config, cache.as_ref())?;
    Ok(results.pop().expect("one pool in, one result out"))
}

/// Fuses every pool, batching scorer calls across sentences.
pub fn fuse_corpus(pools: &[CandidatePool], scorer: &dyn Scorer, config: &FusionConfig) -> Result<Vec<FusionResult>> {
    let cache = config.cache_enabled.then(ScoreCache::new);
    run(pools, scorer, config, cache.as_ref())
}

/// Like [`fuse_corpus`], but scores through a caller-owned cache so its
/// counters can be inspected or the cache reused across runs.
pub fn fuse_corpus_with_cache(
    pools: &[CandidatePool],
    scorer: &dyn Scorer,
    config: &FusionConfig,
    cache: &ScoreCache,
) -> Result<Vec<FusionResult>> {
    let config = config.clone().with_cache(true);
    run(pools, scorer, &config, Some(cache))
}
