//! Seeded synthetic candidate pools.
//!
//! Every generator here treats the reference as the source sentence as
//! well, so the lexical scorer (source coverage) and the oracle scorer
//! (ChrF against the reference) both reward candidates closer to it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CandidatePool;

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A lowercase word of 3 to 7 letters.
pub fn word<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(3..=7);
    (0..len)
        .map(|_| LETTERS[rng.gen_range(0..LETTERS.len())] as char)
        .collect()
}

/// A word guaranteed to differ from every word in `avoid`.
pub fn fresh_word<R: Rng>(rng: &mut R, avoid: &[String]) -> String {
    loop {
        let w = word(rng);
        if !avoid.contains(&w) {
            return w;
        }
    }
}

pub fn sentence<R: Rng>(rng: &mut R, len: usize) -> Vec<String> {
    (0..len).map(|_| word(rng)).collect()
}

/// Applies one random token edit: replace, insert or delete.
fn random_edit<R: Rng>(rng: &mut R, tokens: &mut Vec<String>) {
    let op = if tokens.is_empty() { 1 } else { rng.gen_range(0..3) };
    match op {
        0 => {
            let i = rng.gen_range(0..tokens.len());
            tokens[i] = fresh_word(rng, &tokens[i..=i]);
        }
        1 => {
            let i = rng.gen_range(0..=tokens.len());
            let w = word(rng);
            tokens.insert(i, w);
        }
        _ => {
            let i = rng.gen_range(0..tokens.len());
            tokens.remove(i);
        }
    }
}

/// A pool of `n` noisy copies of a random reference, each with 0 to
/// `max_edits` random token edits.
pub fn noisy_pool<R: Rng>(rng: &mut R, id: impl Into<String>, n: usize, len: usize, max_edits: usize) -> CandidatePool {
    let reference = sentence(rng, len);
    let candidates = (0..n)
        .map(|_| {
            let mut c = reference.clone();
            for _ in 0..rng.gen_range(0..=max_edits) {
                random_edit(rng, &mut c);
            }
            c.join(" ")
        })
        .collect();
    let reference = reference.join(" ");
    CandidatePool::new(id, reference.clone(), candidates).with_reference(reference)
}

/// A pool whose candidates differ from the reference only at a few sites
/// (at most `max_sites`), with at most `max_variants` spellings per site
/// including the reference's own.
pub fn sparse_pool<R: Rng>(
    rng: &mut R,
    id: impl Into<String>,
    n: usize,
    max_sites: usize,
    max_variants: usize,
) -> CandidatePool {
    let len = rng.gen_range(6..=10);
    let reference = sentence(rng, len);
    let site_count = rng.gen_range(1..=max_sites.max(1)).min(len / 2);

    // odd positions, two apart, so edited tokens are never adjacent
    let mut slots: Vec<usize> = (0..len / 2).map(|k| 2 * k + 1).filter(|&p| p < len).collect();
    slots.shuffle(rng);
    let mut sites: Vec<usize> = slots.into_iter().take(site_count).collect();
    sites.sort_unstable();

    // each variant: replacement word, deletion (None), or reference token
    let variants: Vec<Vec<Option<String>>> = sites
        .iter()
        .map(|&p| {
            let mut v = vec![Some(reference[p].clone())];
            while v.len() < max_variants.max(1) {
                if rng.gen_bool(0.2) && !v.contains(&None) {
                    v.push(None);
                } else {
                    v.push(Some(fresh_word(rng, &reference)));
                }
            }
            v
        })
        .collect();

    let candidates = (0..n)
        .map(|_| {
            let picks: Vec<usize> = variants.iter().map(|v| rng.gen_range(0..v.len())).collect();
            reference
                .iter()
                .enumerate()
                .filter_map(|(i, tok)| match sites.iter().position(|&p| p == i) {
                    Some(s) => variants[s][picks[s]].clone(),
                    None => Some(tok.clone()),
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let reference = reference.join(" ");
    CandidatePool::new(id, reference.clone(), candidates).with_reference(reference)
}

/// A pool of `n >= 2` candidates where two candidates each get a different
/// half of the sentence right and the rest get both halves wrong.
///
/// No single candidate equals the reference, but splicing the correct span
/// of one into the other recovers it.
pub fn complementary_pool<R: Rng>(rng: &mut R, id: impl Into<String>, n: usize) -> CandidatePool {
    assert!(n >= 2, "complementary pools need two candidates");
    let len = rng.gen_range(8..=12);
    let reference = sentence(rng, len);
    let p = rng.gen_range(1..len / 2 - 1);
    let q = rng.gen_range(len / 2 + 1..len);

    let with_errors = |rng: &mut R, at: &[usize]| {
        let mut c = reference.clone();
        for &i in at {
            c[i] = fresh_word(rng, &reference);
        }
        c.join(" ")
    };

    let mut candidates = vec![with_errors(rng, &[p]), with_errors(rng, &[q])];
    while candidates.len() < n {
        let extra = rng.gen_range(0..len);
        let c = with_errors(rng, &[p, q, extra]);
        candidates.push(c);
    }
    candidates.shuffle(rng);
    let reference = reference.join(" ");
    CandidatePool::new(id, reference.clone(), candidates).with_reference(reference)
}

/// Pools of `max_n` candidates where candidate `i` only edits tokens inside
/// its own slot of `slot_width` tokens, so every extra candidate brings a
/// bounded number of new divergent spans. Truncate to sweep pool sizes.
pub fn scaling_corpus(seed: u64, sentences: usize, max_n: usize, slot_width: usize) -> Vec<CandidatePool> {
    let mut rng = rng(seed);
    let slot_width = slot_width.max(2);
    (0..sentences)
        .map(|s| {
            let reference = sentence(&mut rng, slot_width * max_n);
            let candidates = (0..max_n)
                .map(|i| {
                    let slot = i * slot_width..(i + 1) * slot_width;
                    let mut c = reference.clone();
                    let edits = rng.gen_range(1..=2usize);
                    let mut positions: Vec<usize> = slot.clone().collect();
                    positions.shuffle(&mut rng);
                    let mut positions: Vec<usize> = positions.into_iter().take(edits).collect();
                    positions.sort_unstable_by(|a, b| b.cmp(a));
                    for pos in positions {
                        match rng.gen_range(0..3) {
                            0 => c[pos] = fresh_word(&mut rng, &reference),
                            1 => c.insert(pos, fresh_word(&mut rng, &reference)),
                            _ => {
                                c.remove(pos);
                            }
                        }
                    }
                    c.join(" ")
                })
                .collect();
            let reference = reference.join(" ");
            CandidatePool::new(format!("syn-{s}"), reference.clone(), candidates).with_reference(reference)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(scaling_corpus(7, 3, 5, 3), scaling_corpus(7, 3, 5, 3));
        assert_ne!(scaling_corpus(7, 3, 5, 3), scaling_corpus(8, 3, 5, 3));
        let a = complementary_pool(&mut rng(1), "x", 5);
        let b = complementary_pool(&mut rng(1), "x", 5);
        assert_eq!(a, b);
    }

    #[test]
    fn complementary_pool_has_no_correct_candidate() {
        let mut r = rng(3);
        for i in 0..50 {
            let p = complementary_pool(&mut r, i.to_string(), 5);
            let reference = p.reference.as_deref().unwrap();
            assert_eq!(p.len(), 5);
            assert!(p.candidates.iter().all(|c| c != reference));
        }
    }

    #[test]
    fn sparse_pool_shapes() {
        let mut r = rng(11);
        for i in 0..50 {
            let p = sparse_pool(&mut r, i.to_string(), 4, 3, 3);
            assert_eq!(p.len(), 4);
        }
    }

    #[test]
    fn noisy_pool_sizes() {
        let p = noisy_pool(&mut rng(5), "n", 6, 10, 3);
        assert_eq!(p.len(), 6);
        assert_eq!(p.source, p.reference.clone().unwrap());
    }
}
