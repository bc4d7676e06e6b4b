//! Token-level sequence matching and divergent-span extraction.
//!
//! Matching follows the Ratcliff/Obershelp scheme: find the longest block
//! common to both sequences, then recurse on what lies to its left and
//! right. Ties go to the block starting earliest in `a`, then earliest in
//! `b`. There is no junk or popularity heuristic, so results depend only on
//! the token sequences.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::text::TokenSeq;

/// A maximal run of equal tokens: `a[a_start..a_start + len] == b[b_start..b_start + len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

impl From<MatchBlock> for (usize, usize, usize) {
    fn from(m: MatchBlock) -> Self {
        (m.a_start, m.b_start, m.len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpTag {
    Equal,
    Replace,
    Delete,
    Insert,
}

/// One edit step turning `base[base_range]` into `cand[cand_range]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Opcode {
    pub tag: OpTag,
    pub base_range: Range<usize>,
    pub cand_range: Range<usize>,
}

impl Opcode {
    fn new(tag: OpTag, i1: usize, i2: usize, j1: usize, j2: usize) -> Self {
        Self {
            tag,
            base_range: i1..i2,
            cand_range: j1..j2,
        }
    }
}

struct Matcher<'a> {
    a: &'a [String],
    b: &'a [String],
    b2j: HashMap<&'a str, Vec<usize>>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a [String], b: &'a [String]) -> Self {
        let mut b2j: HashMap<&str, Vec<usize>> = HashMap::new();
        for (j, tok) in b.iter().enumerate() {
            b2j.entry(tok.as_str()).or_default().push(j);
        }
        Self { a, b, b2j }
    }

    fn longest_match(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> MatchBlock {
        let mut best = MatchBlock {
            a_start: alo,
            b_start: blo,
            len: 0,
        };
        // j2len[j] = length of the match ending at a[i - 1], b[j]
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for i in alo..ahi {
            let mut next: HashMap<usize, usize> = HashMap::new();
            if let Some(positions) = self.b2j.get(self.a[i].as_str()) {
                for &j in positions {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = if j == 0 {
                        1
                    } else {
                        j2len.get(&(j - 1)).copied().unwrap_or(0) + 1
                    };
                    next.insert(j, k);
                    if k > best.len {
                        best = MatchBlock {
                            a_start: i + 1 - k,
                            b_start: j + 1 - k,
                            len: k,
                        };
                    }
                }
            }
            j2len = next;
        }
        best
    }

    fn matching_blocks(&self) -> Vec<MatchBlock> {
        let (la, lb) = (self.a.len(), self.b.len());
        let mut queue = vec![(0, la, 0, lb)];
        let mut blocks = Vec::new();
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let m = self.longest_match(alo, ahi, blo, bhi);
            if m.len == 0 {
                continue;
            }
            if alo < m.a_start && blo < m.b_start {
                queue.push((alo, m.a_start, blo, m.b_start));
            }
            if m.a_start + m.len < ahi && m.b_start + m.len < bhi {
                queue.push((m.a_start + m.len, ahi, m.b_start + m.len, bhi));
            }
            blocks.push(m);
        }
        blocks.sort_unstable();

        let mut merged: Vec<MatchBlock> = Vec::with_capacity(blocks.len() + 1);
        for m in blocks {
            match merged.last_mut() {
                Some(last) if last.a_start + last.len == m.a_start && last.b_start + last.len == m.b_start => {
                    last.len += m.len;
                }
                _ => merged.push(m),
            }
        }
        merged.push(MatchBlock {
            a_start: la,
            b_start: lb,
            len: 0,
        });
        merged
    }
}

/// Matching blocks of `a` and `b`, terminated by `(len(a), len(b), 0)`.
pub fn matching_blocks(a: &[String], b: &[String]) -> Vec<MatchBlock> {
    Matcher::new(a, b).matching_blocks()
}

/// Edit script turning `a` into `b`, derived from [`matching_blocks`].
pub fn opcodes(a: &[String], b: &[String]) -> Vec<Opcode> {
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    for m in matching_blocks(a, b) {
        let tag = match (i < m.a_start, j < m.b_start) {
            (true, true) => Some(OpTag::Replace),
            (true, false) => Some(OpTag::Delete),
            (false, true) => Some(OpTag::Insert),
            (false, false) => None,
        };
        if let Some(tag) = tag {
            ops.push(Opcode::new(tag, i, m.a_start, j, m.b_start));
        }
        i = m.a_start + m.len;
        j = m.b_start + m.len;
        if m.len > 0 {
            ops.push(Opcode::new(OpTag::Equal, m.a_start, i, m.b_start, j));
        }
    }
    ops
}

/// A base-side token range and the distinct replacements seen in the pool.
///
/// A zero-width range marks an insertion point; an empty alternative marks a
/// deletion. `alternatives` never contains `base_span` and is never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergentSpanGroup {
    pub start: usize,
    pub end: usize,
    pub base_span: TokenSeq,
    pub alternatives: Vec<TokenSeq>,
}

impl DivergentSpanGroup {
    pub fn base_range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy)]
struct Edit {
    cand: usize,
    op: usize,
    start: usize,
    end: usize,
}

/// Whether `edit` belongs to a group currently spanning `[gs, ge)`. A
/// zero-width position only overlaps a range it lies strictly inside of.
/// Callers feed edits sorted by `(start, end)`.
fn joins_group(gs: usize, ge: usize, edit: &Edit) -> bool {
    let zero_group = gs == ge;
    let zero_edit = edit.start == edit.end;
    match (zero_group, zero_edit) {
        (true, true) => edit.start == gs,
        (true, false) => false,
        (false, true) => gs < edit.start && edit.start < ge,
        (false, false) => edit.start < ge,
    }
}

/// Spans where `others` diverge from `base`, grouped and sorted by position.
///
/// Edits from different candidates whose base ranges overlap are merged into
/// one group covering the union of their ranges. Each candidate touching a
/// group contributes one alternative: its own tokens over the union range,
/// with all of its edits inside the group applied and base tokens elsewhere.
pub fn find_divergent_spans(base: &TokenSeq, others: &[TokenSeq]) -> Vec<DivergentSpanGroup> {
    let all_ops: Vec<Vec<Opcode>> = others.iter().map(|c| opcodes(base, c)).collect();

    let mut edits: Vec<Edit> = all_ops
        .iter()
        .enumerate()
        .flat_map(|(cand, ops)| {
            ops.iter()
                .enumerate()
                .filter(|(_, op)| op.tag != OpTag::Equal)
                .map(move |(op, o)| Edit {
                    cand,
                    op,
                    start: o.base_range.start,
                    end: o.base_range.end,
                })
        })
        .collect();
    edits.sort_by_key(|e| (e.start, e.end, e.cand, e.op));

    let mut clusters: Vec<(usize, usize, Vec<Edit>)> = Vec::new();
    for edit in edits {
        match clusters.last_mut() {
            Some((gs, ge, members)) if joins_group(*gs, *ge, &edit) => {
                *ge = (*ge).max(edit.end);
                members.push(edit);
            }
            _ => clusters.push((edit.start, edit.end, vec![edit])),
        }
    }

    clusters
        .into_iter()
        .filter_map(|(start, end, mut members)| {
            let base_span = base.slice(start, end);
            members.sort_by_key(|e| (e.cand, e.op));
            let mut alternatives: Vec<TokenSeq> = Vec::new();
            let mut idx = 0;
            while idx < members.len() {
                let cand = members[idx].cand;
                let mut member_ops = Vec::new();
                while idx < members.len() && members[idx].cand == cand {
                    member_ops.push(members[idx].op);
                    idx += 1;
                }
                let alt = realign(&others[cand], &all_ops[cand], &member_ops, start, end);
                if alt != base_span && !alternatives.contains(&alt) {
                    alternatives.push(alt);
                }
            }
            (!alternatives.is_empty()).then_some(DivergentSpanGroup {
                start,
                end,
                base_span,
                alternatives,
            })
        })
        .collect()
}

/// Candidate tokens covering base range `[start, end)`.
fn realign(cand: &TokenSeq, ops: &[Opcode], members: &[usize], start: usize, end: usize) -> TokenSeq {
    let mut out: Vec<String> = Vec::new();
    for (idx, op) in ops.iter().enumerate() {
        if op.tag == OpTag::Equal {
            let lo = op.base_range.start.max(start);
            let hi = op.base_range.end.min(end);
            if lo < hi {
                let offset = op.cand_range.start;
                let from = offset + (lo - op.base_range.start);
                let to = offset + (hi - op.base_range.start);
                out.extend_from_slice(&cand[from..to]);
            }
        } else if members.contains(&idx) {
            out.extend_from_slice(&cand[op.cand_range.clone()]);
        }
    }
    TokenSeq::from_tokens(out)
}
