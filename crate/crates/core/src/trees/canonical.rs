use std::fmt;

use serde::{Deserialize, Serialize};

use super::{RankedTree, Tree, UnrootedTree};
use crate::error::{Error, Result};

/// Granularity at which two topologies are considered equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CanonicalMode {
    /// Merge order matters.
    Ranked,
    /// Rooted shape with labels, merge order ignored.
    #[default]
    RootedUnranked,
    /// Unrooted labelled shape.
    Unrooted,
}

impl CanonicalMode {
    pub fn name(self) -> &'static str {
        match self {
            CanonicalMode::Ranked => "ranked",
            CanonicalMode::RootedUnranked => "rooted-unranked",
            CanonicalMode::Unrooted => "unrooted",
        }
    }
}

impl std::str::FromStr for CanonicalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranked" => Ok(Self::Ranked),
            "rooted-unranked" | "rooted" => Ok(Self::RootedUnranked),
            "unrooted" => Ok(Self::Unrooted),
            other => Err(Error::Config(format!("unknown canonicalization mode {other:?}"))),
        }
    }
}

/// Label-based topology key; independent of internal node ids and edge order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TopologyKey(pub String);

impl fmt::Display for TopologyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_topology(tree: &Tree, mode: CanonicalMode) -> Result<TopologyKey> {
    match (tree, mode) {
        (Tree::Ranked(t), CanonicalMode::Ranked) => Ok(ranked_key(t)),
        (Tree::Ranked(t), CanonicalMode::RootedUnranked) => Ok(rooted_key(t)),
        (Tree::Ranked(t), CanonicalMode::Unrooted) => ranked_unrooted_key(t),
        (Tree::Unrooted(t), CanonicalMode::Unrooted) => Ok(unrooted_key(t)),
        (Tree::Unrooted(_), m) => Err(Error::IncompatibleMode { mode: m.name(), kind: "unrooted" }),
    }
}

fn clades(tree: &RankedTree) -> Vec<Vec<&str>> {
    let n = tree.n_leaves();
    let mut out: Vec<Vec<&str>> = tree.labels().iter().map(|l| vec![l.as_str()]).collect();
    for &(a, b) in tree.merges() {
        let mut c: Vec<&str> = out[a].iter().chain(&out[b]).copied().collect();
        c.sort_unstable();
        out.push(c);
    }
    debug_assert_eq!(out.len(), 2 * n - 1);
    out
}

fn ranked_key(tree: &RankedTree) -> TopologyKey {
    let n = tree.n_leaves();
    let cl = clades(tree);
    let events: Vec<String> = cl[n..].iter().map(|c| format!("{{{}}}", c.join(","))).collect();
    TopologyKey(format!("R:{}", events.join(";")))
}

fn rooted_key(tree: &RankedTree) -> TopologyKey {
    let n = tree.n_leaves();
    let mut repr: Vec<String> = tree.labels().to_vec();
    for &(a, b) in tree.merges() {
        let (x, y) = (&repr[a], &repr[b]);
        let s = if x <= y { format!("({x},{y})") } else { format!("({y},{x})") };
        repr.push(s);
    }
    TopologyKey(format!("T:{}", repr[2 * n - 2]))
}

/// Canonical string of the subtree at `node` seen from `from`.
fn subtree_string(adj: &[Vec<usize>], labels: &[String], node: usize, from: usize) -> String {
    if node < labels.len() {
        return labels[node].clone();
    }
    let mut parts: Vec<String> =
        adj[node].iter().filter(|&&w| w != from).map(|&w| subtree_string(adj, labels, w, node)).collect();
    parts.sort();
    format!("({})", parts.join(","))
}

fn unrooted_key_from_adjacency(adj: &[Vec<usize>], labels: &[String]) -> TopologyKey {
    let anchor = (0..labels.len()).min_by(|&a, &b| labels[a].cmp(&labels[b])).expect("nonempty");
    let nb = adj[anchor][0];
    TopologyKey(format!("U:({},{})", labels[anchor], subtree_string(adj, labels, nb, anchor)))
}

fn unrooted_key(tree: &UnrootedTree) -> TopologyKey {
    let adj: Vec<Vec<usize>> = tree.adjacency().into_iter().map(|v| v.into_iter().map(|(w, _)| w).collect()).collect();
    unrooted_key_from_adjacency(&adj, tree.labels())
}

fn ranked_unrooted_key(tree: &RankedTree) -> Result<TopologyKey> {
    let n = tree.n_leaves();
    if n < 3 {
        return Err(Error::IncompatibleMode { mode: "unrooted", kind: "two-leaf ranked" });
    }
    let root = tree.root();
    let mut adj = vec![Vec::new(); 2 * n - 1];
    let (r1, r2) = tree.merges()[n - 2];
    for (j, &(a, b)) in tree.merges().iter().enumerate().take(n - 2) {
        for c in [a, b] {
            adj[c].push(n + j);
            adj[n + j].push(c);
        }
    }
    adj[r1].push(r2);
    adj[r2].push(r1);
    debug_assert!(adj[root].is_empty());
    Ok(unrooted_key_from_adjacency(&adj, tree.labels()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn swapped_merge_order_changes_ranked_key_only() {
        let x = vec![1.0, 0.5, 0.25, 0.125];
        let a = RankedTree::new(labels(5), vec![(0, 1), (2, 3), (4, 5), (6, 7)], x.clone()).unwrap();
        let b = RankedTree::new(labels(5), vec![(0, 1), (4, 5), (2, 3), (6, 7)], x).unwrap();
        let (a, b) = (Tree::Ranked(a), Tree::Ranked(b));
        assert_ne!(
            canonical_topology(&a, CanonicalMode::Ranked).unwrap(),
            canonical_topology(&b, CanonicalMode::Ranked).unwrap()
        );
        assert_eq!(
            canonical_topology(&a, CanonicalMode::RootedUnranked).unwrap(),
            canonical_topology(&b, CanonicalMode::RootedUnranked).unwrap()
        );
    }

    #[test]
    fn internal_relabeling_and_edge_permutation_do_not_matter() {
        let t1 = UnrootedTree::new(labels(4), vec![(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)], vec![1.0; 5]).unwrap();
        let t2 = UnrootedTree::new(labels(4), vec![(3, 4), (4, 5), (0, 5), (2, 4), (1, 5)], vec![1.0; 5]).unwrap();
        assert_eq!(
            canonical_topology(&t1.into(), CanonicalMode::Unrooted).unwrap(),
            canonical_topology(&t2.into(), CanonicalMode::Unrooted).unwrap()
        );
    }

    #[test]
    fn ranked_mode_on_unrooted_is_an_error() {
        let t = UnrootedTree::new(labels(4), vec![(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)], vec![1.0; 5]).unwrap();
        let t = Tree::Unrooted(t);
        assert!(canonical_topology(&t, CanonicalMode::Ranked).is_err());
        assert!(canonical_topology(&t, CanonicalMode::RootedUnranked).is_err());
    }

    #[test]
    fn rooted_tree_unrooted_key_matches_unrooted_tree() {
        // ((1,2),(3,4)) rooted, versus the same quartet unrooted.
        let r = RankedTree::new(labels(4), vec![(0, 1), (2, 3), (4, 5)], vec![1.0, 1.0, 1.0]).unwrap();
        let u = UnrootedTree::new(labels(4), vec![(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)], vec![1.0; 5]).unwrap();
        assert_eq!(
            canonical_topology(&r.into(), CanonicalMode::Unrooted).unwrap(),
            canonical_topology(&u.into(), CanonicalMode::Unrooted).unwrap()
        );
    }
}
