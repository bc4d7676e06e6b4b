//! Surface metrics, the defect rule, pool diversity and novelty.
//!
//! `sentence_bleu` and `chrf` follow SacreBLEU's sentence-level definitions
//! (exponential smoothing with effective order for BLEU; chrF with six
//! character orders, beta 2 and whitespace removed).

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::rerank::Utility;
use crate::text::{normalize_spaces, tokenize, TokenizerMode};
use crate::{CandidatePool, Error, Result};

/// Hypotheses scoring below this sentence BLEU against their reference are
/// counted as defects (hallucination-like failures).
pub const DEFECT_BLEU_THRESHOLD: f64 = 3.0;

pub const CHRF_CHAR_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub tokenizer: TokenizerMode,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            tokenizer: TokenizerMode::Whitespace,
        }
    }
}

fn ngram_counts<T: Eq + Hash>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for gram in items.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn clipped_matches<T: Eq + Hash>(hyp: &HashMap<&[T], usize>, reference: &HashMap<&[T], usize>) -> usize {
    hyp.iter()
        .map(|(gram, &c)| c.min(reference.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Smoothed sentence BLEU in `[0, 100]`.
///
/// Orders run from 1 up to `max_n` or the hypothesis length, whichever is
/// smaller. A zero precision at order `n` is replaced by `1 / (2^k * total)`
/// where `k` counts the zero precisions seen so far. No unigram match at all
/// scores 0.
pub fn sentence_bleu(hyp: &str, reference: &str, cfg: &BleuConfig) -> f64 {
    let hyp = tokenize(hyp, cfg.tokenizer);
    let reference = tokenize(reference, cfg.tokenizer);
    let (sys_len, ref_len) = (hyp.len(), reference.len());
    if sys_len == 0 || cfg.max_n == 0 {
        return 0.0;
    }

    let mut correct = vec![0usize; cfg.max_n];
    let mut total = vec![0usize; cfg.max_n];
    for n in 1..=cfg.max_n {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&reference, n);
        correct[n - 1] = clipped_matches(&h, &r);
        total[n - 1] = sys_len.saturating_sub(n - 1);
    }
    if correct.iter().all(|&c| c == 0) {
        return 0.0;
    }

    let bp = if sys_len < ref_len {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    } else {
        1.0
    };

    let mut log_sum = 0.0;
    let mut order = 0;
    let mut smooth = 1.0;
    for n in 0..cfg.max_n {
        if total[n] == 0 {
            break;
        }
        order = n + 1;
        let precision = if correct[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * total[n] as f64)
        } else {
            correct[n] as f64 / total[n] as f64
        };
        log_sum += precision.ln();
    }
    100.0 * bp * (log_sum / order as f64).exp()
}

/// Character n-gram F-score in `[0, 100]`.
///
/// Whitespace is removed before extracting n-grams. Precision and recall
/// are averaged over the orders that both strings have n-grams for, then
/// combined with recall weighted `beta` times as much as precision.
pub fn chrf_with(hyp: &str, reference: &str, char_n: usize, beta: f64) -> f64 {
    let hyp: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let reference: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();

    let mut avg_prec = 0.0;
    let mut avg_rec = 0.0;
    let mut effective = 0;
    for n in 1..=char_n {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&reference, n);
        let n_hyp = hyp.len().saturating_sub(n - 1);
        let n_ref = reference.len().saturating_sub(n - 1);
        if n_hyp == 0 || n_ref == 0 {
            continue;
        }
        let matches = clipped_matches(&h, &r) as f64;
        avg_prec += matches / n_hyp as f64;
        avg_rec += matches / n_ref as f64;
        effective += 1;
    }
    if effective == 0 {
        return 0.0;
    }
    avg_prec /= effective as f64;
    avg_rec /= effective as f64;
    if avg_prec + avg_rec == 0.0 {
        return 0.0;
    }
    let factor = beta * beta;
    100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec)
}

pub fn chrf(hyp: &str, reference: &str) -> f64 {
    chrf_with(hyp, reference, CHRF_CHAR_ORDER, CHRF_BETA)
}

/// Whether `hyp` is a defect translation of `reference` (BLEU below 3).
pub fn is_defect(hyp: &str, reference: &str) -> bool {
    sentence_bleu(hyp, reference, &BleuConfig::default()) < DEFECT_BLEU_THRESHOLD
}

/// Number of distinct whitespace-token n-grams across the candidates.
pub fn unique_ngrams<S: AsRef<str>>(candidates: &[S], n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::contract("n-gram order must be at least 1"));
    }
    let seqs: Vec<_> = candidates
        .iter()
        .map(|c| tokenize(c.as_ref(), TokenizerMode::Whitespace))
        .collect();
    let grams: HashSet<&[String]> = seqs
        .iter()
        .filter(|s| s.len() >= n)
        .flat_map(|s| s.windows(n))
        .collect();
    Ok(grams.len())
}

/// Number of distinct candidate strings.
pub fn unique_candidates<S: AsRef<str>>(candidates: &[S]) -> usize {
    candidates.iter().map(AsRef::as_ref).collect::<HashSet<&str>>().len()
}

/// One minus the mean utility over all ordered pairs of distinct positions.
///
/// Expects a utility normalized to `[0, 1]` with `u(y, y) = 1`.
pub fn semantic_diversity<S: AsRef<str>>(candidates: &[S], utility: &dyn Utility) -> Result<f64> {
    let n = candidates.len();
    if n < 2 {
        return Err(Error::contract("semantic diversity needs at least two candidates"));
    }
    let mut sum = 0.0;
    for (i, yi) in candidates.iter().enumerate() {
        for (j, yj) in candidates.iter().enumerate() {
            if i != j {
                sum += utility.utility(yj.as_ref(), yi.as_ref());
            }
        }
    }
    Ok(1.0 - sum / (n * (n - 1)) as f64)
}

/// Percentage of fused outputs that match no candidate of their pool.
pub fn novelty_rate<S: AsRef<str>>(fused: &[S], pools: &[CandidatePool]) -> Result<f64> {
    if fused.len() != pools.len() {
        return Err(Error::contract(format!(
            "{} outputs for {} pools",
            fused.len(),
            pools.len()
        )));
    }
    if fused.is_empty() {
        return Ok(0.0);
    }
    let novel = fused
        .iter()
        .zip(pools)
        .filter(|(out, pool)| {
            let out = normalize_spaces(out.as_ref());
            !pool.candidates.iter().any(|c| normalize_spaces(c) == out)
        })
        .count();
    Ok(100.0 * novel as f64 / fused.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEval {
    pub id: String,
    pub bleu: f64,
    pub chrf: f64,
    pub defect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEval {
    pub sentences: usize,
    pub defect_rate: f64,
    pub mean_bleu: f64,
    pub mean_chrf: f64,
    pub mean_unique_4grams: f64,
    pub mean_unique_candidates: f64,
    /// Mean over pools with at least two candidates; `None` if there are none.
    pub mean_semantic_diversity: Option<f64>,
    pub novelty_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: Vec<SentenceEval>,
    pub corpus: CorpusEval,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Scores `hyps` against the references of `pools` and summarizes the pools.
pub fn evaluate<S: AsRef<str>>(hyps: &[S], pools: &[CandidatePool], utility: &dyn Utility) -> Result<EvalReport> {
    if hyps.len() != pools.len() {
        return Err(Error::contract(format!(
            "{} hypotheses for {} pools",
            hyps.len(),
            pools.len()
        )));
    }
    let bleu_cfg = BleuConfig::default();
    let mut sentences = Vec::with_capacity(pools.len());
    for (hyp, pool) in hyps.iter().zip(pools) {
        let reference = pool
            .reference
            .as_deref()
            .ok_or_else(|| Error::contract(format!("pool `{}` has no reference", pool.id)))?;
        let bleu = sentence_bleu(hyp.as_ref(), reference, &bleu_cfg);
        sentences.push(SentenceEval {
            id: pool.id.clone(),
            bleu,
            chrf: chrf(hyp.as_ref(), reference),
            defect: bleu < DEFECT_BLEU_THRESHOLD,
        });
    }

    let mut unique4 = Vec::with_capacity(pools.len());
    let mut diversity = Vec::new();
    for pool in pools {
        unique4.push(unique_ngrams(&pool.candidates, 4)? as f64);
        if pool.len() >= 2 {
            diversity.push(semantic_diversity(&pool.candidates, utility)?);
        }
    }

    let defects = sentences.iter().filter(|s| s.defect).count();
    let corpus = CorpusEval {
        sentences: sentences.len(),
        defect_rate: if sentences.is_empty() {
            0.0
        } else {
            100.0 * defects as f64 / sentences.len() as f64
        },
        mean_bleu: mean(sentences.iter().map(|s| s.bleu)),
        mean_chrf: mean(sentences.iter().map(|s| s.chrf)),
        mean_unique_4grams: mean(unique4.into_iter()),
        mean_unique_candidates: mean(pools.iter().map(|p| unique_candidates(&p.candidates) as f64)),
        mean_semantic_diversity: (!diversity.is_empty()).then(|| mean(diversity.into_iter())),
        novelty_rate: novelty_rate(hyps, pools)?,
    };
    Ok(EvalReport { sentences, corpus })
}
