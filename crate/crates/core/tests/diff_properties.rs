use proptest::prelude::*;
use qefuse::diff::{find_divergent_spans, matching_blocks, opcodes, OpTag};
use qefuse::fusion::{materialize, Choice, ChoiceVector};
use qefuse::TokenSeq;

fn tokens() -> impl Strategy<Value = TokenSeq> {
    proptest::collection::vec("[a-e]", 0..12).prop_map(TokenSeq::from_tokens)
}

/// Every choice vector over `sizes[i] + 1` options per group, in
/// lexicographic order.
fn all_choices(sizes: &[usize]) -> Vec<ChoiceVector> {
    let mut out = vec![ChoiceVector::default()];
    for &n in sizes {
        let mut next = Vec::with_capacity(out.len() * (n + 1));
        for prefix in &out {
            for c in std::iter::once(Choice::Keep).chain((0..n).map(Choice::Alt)) {
                let mut v = prefix.0.clone();
                v.push(c);
                next.push(ChoiceVector(v));
            }
        }
        out = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn opcodes_reconstruct_and_tile(a in tokens(), b in tokens()) {
        let ops = opcodes(&a, &b);
        let mut rebuilt: Vec<String> = Vec::new();
        let (mut i, mut j) = (0, 0);
        for op in &ops {
            prop_assert_eq!(op.base_range.start, i);
            prop_assert_eq!(op.cand_range.start, j);
            match op.tag {
                OpTag::Equal => prop_assert_eq!(&a[op.base_range.clone()], &b[op.cand_range.clone()]),
                OpTag::Delete => prop_assert!(op.cand_range.is_empty() && !op.base_range.is_empty()),
                OpTag::Insert => prop_assert!(op.base_range.is_empty() && !op.cand_range.is_empty()),
                OpTag::Replace => prop_assert!(!op.base_range.is_empty() && !op.cand_range.is_empty()),
            }
            rebuilt.extend_from_slice(&b[op.cand_range.clone()]);
            i = op.base_range.end;
            j = op.cand_range.end;
        }
        prop_assert_eq!(i, a.len());
        prop_assert_eq!(j, b.len());
        prop_assert_eq!(&rebuilt[..], &b[..]);
    }

    #[test]
    fn blocks_increase_and_match(a in tokens(), b in tokens()) {
        let blocks = matching_blocks(&a, &b);
        let last = blocks.last().unwrap();
        prop_assert_eq!((last.a_start, last.b_start, last.len), (a.len(), b.len(), 0));
        for w in blocks.windows(2) {
            prop_assert!(w[0].a_start + w[0].len <= w[1].a_start);
            prop_assert!(w[0].b_start + w[0].len <= w[1].b_start);
        }
        for m in &blocks {
            prop_assert_eq!(&a[m.a_start..m.a_start + m.len], &b[m.b_start..m.b_start + m.len]);
        }
    }

    #[test]
    fn groups_are_disjoint_and_sorted(base in tokens(), others in proptest::collection::vec(tokens(), 1..5)) {
        let groups = find_divergent_spans(&base, &others);
        for g in &groups {
            prop_assert!(!g.alternatives.is_empty());
            prop_assert!(!g.alternatives.contains(&g.base_span));
            prop_assert_eq!(&g.base_span[..], &base[g.start..g.end]);
        }
        for w in groups.windows(2) {
            let (x, y) = (&w[0], &w[1]);
            prop_assert!(x.start <= y.start);
            if x.start == y.start {
                // a zero-width insertion point sorts before a range starting there
                prop_assert!(x.is_insertion() && !y.is_insertion());
            } else {
                prop_assert!(x.end <= y.start);
            }
        }
        prop_assert!(find_divergent_spans(&base, std::slice::from_ref(&base)).is_empty());
    }

    #[test]
    fn every_candidate_is_reachable(base in tokens(), others in proptest::collection::vec(tokens(), 1..4)) {
        let groups = find_divergent_spans(&base, &others);
        let sizes: Vec<usize> = groups.iter().map(|g| g.alternatives.len()).collect();
        let combos: usize = sizes.iter().map(|n| n + 1).product();
        prop_assume!(combos <= 4096);
        let reachable: std::collections::HashSet<TokenSeq> = all_choices(&sizes)
            .iter()
            .map(|c| materialize(&base, &groups, c).unwrap())
            .collect();
        for cand in &others {
            prop_assert!(reachable.contains(cand), "candidate {:?} unreachable", cand);
        }
    }
}
