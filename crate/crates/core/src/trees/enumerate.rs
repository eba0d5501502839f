//! Exhaustive enumeration of small topology spaces, used by the counting
//! checks and the proposal-graph connectivity test.

use super::{star3, EdgeEnd, RankedTree, UnrootedTree};

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Every ranked topology on `n` leaves, each with unit holding times.
pub fn ranked_topologies(n: usize) -> Vec<RankedTree> {
    assert!(n >= 2, "need at least two leaves");
    let mut out = Vec::new();
    let mut merges = Vec::with_capacity(n - 1);
    let alive: Vec<usize> = (0..n).collect();
    recurse_ranked(n, &alive, &mut merges, &mut out);
    out
}

fn recurse_ranked(n: usize, alive: &[usize], merges: &mut Vec<(usize, usize)>, out: &mut Vec<RankedTree>) {
    if alive.len() == 1 {
        out.push(RankedTree::new(default_labels(n), merges.clone(), vec![1.0; n - 1]).expect("valid"));
        return;
    }
    let next = n + merges.len();
    for i in 0..alive.len() {
        for j in i + 1..alive.len() {
            merges.push((alive[i], alive[j]));
            let mut rest: Vec<usize> = alive.iter().copied().filter(|&v| v != alive[i] && v != alive[j]).collect();
            rest.push(next);
            recurse_ranked(n, &rest, merges, out);
            merges.pop();
        }
    }
}

/// Every unrooted binary topology on `n >= 4` leaves, with unit lengths.
pub fn unrooted_topologies(n: usize) -> Vec<UnrootedTree> {
    assert!(n >= 4, "need at least four leaves");
    let labels = default_labels(3);
    let mut level = vec![star3([labels[0].clone(), labels[1].clone(), labels[2].clone()], [1.0; 3])];
    for _ in 3..n {
        let mut next = Vec::new();
        for t in &level {
            for e in 0..t.edges().len() {
                next.push(t.extend_at(e, EdgeEnd::Upper, 1.0, 1.0, t.next_label()).expect("valid"));
            }
        }
        level = next;
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{canonical_topology, CanonicalMode, Tree};
    use std::collections::HashSet;

    #[test]
    fn ranked_counts_match_formula() {
        for n in 2..=5 {
            let all = ranked_topologies(n);
            let keys: HashSet<_> =
                all.into_iter().map(|t| canonical_topology(&Tree::Ranked(t), CanonicalMode::Ranked).unwrap()).collect();
            assert_eq!(keys.len() as f64, crate::trees::ranked_topology_count(n), "n = {n}");
        }
    }

    #[test]
    fn rooted_unranked_counts() {
        // (2n - 3)!! rooted shapes: 3 for n = 3, 15 for n = 4.
        for (n, want) in [(3, 3), (4, 15), (5, 105)] {
            let keys: HashSet<_> = ranked_topologies(n)
                .into_iter()
                .map(|t| canonical_topology(&Tree::Ranked(t), CanonicalMode::RootedUnranked).unwrap())
                .collect();
            assert_eq!(keys.len(), want);
        }
    }

    #[test]
    fn unrooted_counts_match_double_factorial() {
        for n in 4..=6 {
            let keys: HashSet<_> = unrooted_topologies(n)
                .into_iter()
                .map(|t| canonical_topology(&Tree::Unrooted(t), CanonicalMode::Unrooted).unwrap())
                .collect();
            assert_eq!(keys.len() as f64, crate::trees::unrooted_topology_count(n), "n = {n}");
        }
    }
}
