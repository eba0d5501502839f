use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::ranked::next_label;
use super::{validate_labels, Branch, BranchMap};
use crate::error::{Error, Result};

/// An unrooted binary tree with directly parametrized branch lengths.
///
/// Leaves are nodes `0..n`, internal nodes `n..2n-2`. Edges are stored as
/// `(min, max)` node pairs; the position of an edge in the list is its index
/// in the length vector `x`, which the restriction rule relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrootedTree {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    lengths: Vec<f64>,
}

/// Which end of an edge a new leaf is attached next to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEnd {
    Lower,
    Upper,
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl UnrootedTree {
    pub fn new(labels: Vec<String>, edges: Vec<(usize, usize)>, lengths: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n < 4 {
            return Err(Error::InvalidTree(format!("unrooted tree needs at least 4 leaves, got {n}")));
        }
        Self::new_unchecked_size(labels, edges, lengths)
    }

    /// Same as [`UnrootedTree::new`] but also accepts the 3-leaf star, which
    /// seeds the sequential construction.
    pub(crate) fn new_unchecked_size(
        labels: Vec<String>,
        edges: Vec<(usize, usize)>,
        lengths: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        validate_labels(&labels)?;
        if edges.len() != 2 * n - 3 || lengths.len() != edges.len() {
            return Err(Error::InvalidTree(format!(
                "expected {} edges and lengths, got {} and {}",
                2 * n - 3,
                edges.len(),
                lengths.len()
            )));
        }
        if let Some(bad) = lengths.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidTree(format!("branch length {bad} is not strictly positive")));
        }
        let nodes = 2 * n - 2;
        let mut degree = vec![0usize; nodes];
        let edges: Vec<_> = edges.into_iter().map(|(a, b)| norm(a, b)).collect();
        for &(a, b) in &edges {
            if a == b || b >= nodes {
                return Err(Error::InvalidTree(format!("edge ({a}, {b}) is malformed")));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        for (v, &d) in degree.iter().enumerate() {
            let want = if v < n { 1 } else { 3 };
            if d != want {
                return Err(Error::InvalidTree(format!("node {v} has degree {d}, expected {want}")));
            }
        }
        let tree = Self { labels, edges, lengths };
        // With |E| = |V| - 1, connectivity makes it a tree.
        let adj = tree.adjacency();
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidTree("edges do not form a connected tree".into()));
        }
        Ok(tree)
    }

    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn node_count(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves()
    }

    pub fn with_labels(&self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_leaves() {
            return Err(Error::InvalidTree(format!("{} labels for {} leaves", labels.len(), self.n_leaves())));
        }
        Self::new_unchecked_size(labels, self.edges.clone(), self.lengths.clone())
    }

    pub fn with_lengths(&self, lengths: Vec<f64>) -> Result<Self> {
        Self::new_unchecked_size(self.labels.clone(), self.edges.clone(), lengths)
    }

    pub(crate) fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new_unchecked_size(self.labels.clone(), edges, self.lengths.clone())
    }

    /// Neighbours of every node as `(neighbour, edge index)`, in edge-index order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::with_capacity(3); self.node_count()];
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
        adj
    }

    /// Indices of edges joining two internal nodes.
    pub fn internal_edges(&self) -> Vec<usize> {
        let n = self.n_leaves();
        (0..self.edges.len()).filter(|&i| self.edges[i].0 >= n).collect()
    }

    pub fn branch_map(&self) -> BranchMap {
        let n = self.n_leaves();
        BranchMap::new(
            self.edges
                .iter()
                .zip(&self.lengths)
                .map(|(&(u, v), &length)| Branch { u, v, length, external: u < n || v < n })
                .collect(),
        )
    }

    /// Insert a new leaf on edge `edge`, next to the chosen end. The edge keeps
    /// its index and length and now ends at the new internal node; the segment
    /// back to the chosen end gets index `2n - 3` and the pendant edge to the
    /// new leaf gets index `2n - 2`.
    pub fn extend_at(
        &self,
        edge: usize,
        end: EdgeEnd,
        attach_length: f64,
        leaf_length: f64,
        label: String,
    ) -> Result<Self> {
        let n = self.n_leaves();
        if edge >= self.edges.len() {
            return Err(Error::OutOfRange(format!("edge {edge} not in 0..{}", self.edges.len())));
        }
        let shift = |x: usize| if x >= n { x + 1 } else { x };
        let new_leaf = n;
        let w = 2 * n - 1;
        let mut edges: Vec<_> = self.edges.iter().map(|&(a, b)| (shift(a), shift(b))).collect();
        let (lo, hi) = edges[edge];
        let (chosen, other) = match end {
            EdgeEnd::Lower => (lo, hi),
            EdgeEnd::Upper => (hi, lo),
        };
        edges[edge] = norm(other, w);
        edges.push(norm(w, chosen));
        edges.push(norm(w, new_leaf));
        let mut lengths = self.lengths.clone();
        lengths.push(attach_length);
        lengths.push(leaf_length);
        let mut labels = self.labels.clone();
        labels.push(label);
        Self::new_unchecked_size(labels, edges, lengths)
    }

    /// Remove `leaf` and its pendant edge; at the resulting degree-2 node the
    /// adjacent edge with the higher index is deleted and its endpoints are
    /// joined through the lower-index edge, which keeps its length.
    pub fn restrict_leaf(&self, leaf: usize) -> Result<Self> {
        let n = self.n_leaves();
        if n < 5 {
            return Err(Error::OutOfRange(format!("cannot restrict a {n}-leaf tree below 4 leaves")));
        }
        self.remove_leaf_unchecked(leaf)
    }

    pub(crate) fn remove_leaf_unchecked(&self, leaf: usize) -> Result<Self> {
        let n = self.n_leaves();
        if leaf >= n {
            return Err(Error::OutOfRange(format!("leaf {leaf} not in 0..{n}")));
        }
        let adj = self.adjacency();
        let (w, pendant) = adj[leaf][0];
        let others: Vec<(usize, usize)> = adj[w].iter().copied().filter(|&(_, e)| e != pendant).collect();
        let (lower, upper) = if others[0].1 < others[1].1 { (others[0], others[1]) } else { (others[1], others[0]) };
        let (far_end, drop_edge) = (upper.0, upper.1);
        let keep = lower.1;
        let remap = |x: usize| x - usize::from(x > leaf) - usize::from(x > w);
        let mut edges = Vec::with_capacity(self.edges.len() - 2);
        let mut lengths = Vec::with_capacity(self.edges.len() - 2);
        for (i, &(a, b)) in self.edges.iter().enumerate() {
            if i == pendant || i == drop_edge {
                continue;
            }
            let (a, b) = if i == keep {
                let near = if a == w { b } else { a };
                (near, far_end)
            } else {
                (a, b)
            };
            edges.push(norm(remap(a), remap(b)));
            lengths.push(self.lengths[i]);
        }
        let mut labels = self.labels.clone();
        labels.remove(leaf);
        Self::new_unchecked_size(labels, edges, lengths)
    }

    pub fn next_label(&self) -> String {
        next_label(&self.labels)
    }

    /// Swap the subtrees hanging from edge `a_edge` (at one end of internal
    /// edge `edge`) and `c_edge` (at the other end). Applying the same swap
    /// twice restores the tree.
    pub fn nni(&self, edge: usize, a_edge: usize, c_edge: usize) -> Result<Self> {
        let n = self.n_leaves();
        let (u, v) = *self.edges.get(edge).ok_or_else(|| Error::OutOfRange(format!("edge {edge}")))?;
        if u < n {
            return Err(Error::OutOfRange(format!("edge {edge} is external")));
        }
        let touches =
            |e: usize, node: usize| e != edge && self.edges.get(e).is_some_and(|&(a, b)| a == node || b == node);
        let (side_a, side_c) = if touches(a_edge, u) && touches(c_edge, v) {
            (u, v)
        } else if touches(a_edge, v) && touches(c_edge, u) {
            (v, u)
        } else {
            return Err(Error::OutOfRange(format!(
                "edges {a_edge} and {c_edge} do not sit on opposite ends of edge {edge}"
            )));
        };
        let far = |e: usize, near: usize| {
            let (a, b) = self.edges[e];
            if a == near {
                b
            } else {
                a
            }
        };
        let a_node = far(a_edge, side_a);
        let c_node = far(c_edge, side_c);
        let mut edges = self.edges.clone();
        edges[a_edge] = norm(side_c, a_node);
        edges[c_edge] = norm(side_a, c_node);
        self.with_edges(edges)
    }
}

/// Attach a new leaf on a uniformly chosen edge at a uniformly chosen end,
/// with two independent `Exp(rate)` lengths.
pub fn extend_uniform<R: Rng + ?Sized>(tree: &UnrootedTree, rate: f64, rng: &mut R) -> Result<UnrootedTree> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::OutOfRange(format!("branch-length rate {rate} must be positive")));
    }
    let edge = rng.random_range(0..tree.edges().len());
    let end = if rng.random::<bool>() { EdgeEnd::Upper } else { EdgeEnd::Lower };
    let exp = Exp::new(rate).expect("positive rate");
    let attach = exp.sample(rng).max(f64::MIN_POSITIVE);
    let pendant = exp.sample(rng).max(f64::MIN_POSITIVE);
    tree.extend_at(edge, end, attach, pendant, tree.next_label())
}

/// How [`restrict_uniform`] picks the leaf to delete.
#[derive(Debug, Clone, Copy)]
pub enum LeafChoice {
    Random,
    Newest,
    Index(usize),
}

pub fn restrict_uniform<R: Rng + ?Sized>(tree: &UnrootedTree, choice: LeafChoice, rng: &mut R) -> Result<UnrootedTree> {
    let leaf = match choice {
        LeafChoice::Random => rng.random_range(0..tree.n_leaves()),
        LeafChoice::Newest => tree.n_leaves() - 1,
        LeafChoice::Index(i) => i,
    };
    tree.restrict_leaf(leaf)
}

pub fn psi_uniform(tree: &UnrootedTree) -> BranchMap {
    tree.branch_map()
}

/// The 3-leaf star on the first three labels, the seed of the sequential
/// construction.
pub(crate) fn star3(labels: [String; 3], lengths: [f64; 3]) -> UnrootedTree {
    UnrootedTree::new_unchecked_size(labels.to_vec(), vec![(0, 3), (1, 3), (2, 3)], lengths.to_vec())
        .expect("star is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quartet() -> UnrootedTree {
        // ((1,2),(3,4)) with internal nodes 4 and 5.
        UnrootedTree::new(
            UnrootedTree::integer_labels(4),
            vec![(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
        )
        .unwrap()
    }

    impl UnrootedTree {
        fn integer_labels(n: usize) -> Vec<String> {
            (1..=n).map(|i| i.to_string()).collect()
        }
    }

    #[test]
    fn quartet_branch_map() {
        let map = quartet().branch_map();
        assert_eq!(map.len(), 5);
        assert_eq!(map.branches().iter().filter(|b| b.external).count(), 4);
        assert!((map.total_length() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn extend_then_restrict_newest_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = quartet();
        for _ in 0..50 {
            let e = extend_uniform(&t, 1.0, &mut rng).unwrap();
            assert_eq!(e.edges().len(), 7);
            let back = restrict_uniform(&e, LeafChoice::Newest, &mut rng).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn restrict_requires_five_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(restrict_uniform(&quartet(), LeafChoice::Random, &mut rng).is_err());
    }

    #[test]
    fn restriction_keeps_lower_index_edge() {
        let t = quartet().extend_at(2, EdgeEnd::Upper, 0.7, 0.9, "5".into()).unwrap();
        // Removing leaf 1 (node 0): its neighbour has edges 1 (to leaf 2) and 2
        // (the old internal edge, now ending at the new node). Edge 1 is kept.
        let r = t.restrict_leaf(0).unwrap();
        assert_eq!(r.n_leaves(), 4);
        assert_eq!(r.edges().len(), 5);
        assert_eq!(r.lengths(), &[0.2, 0.4, 0.5, 0.7, 0.9]);
    }

    #[test]
    fn nni_is_an_involution() {
        let t = quartet();
        let once = t.nni(2, 0, 3).unwrap();
        assert_ne!(once, t);
        assert_eq!(once.nni(2, 0, 3).unwrap(), t);
        assert!(t.nni(0, 1, 3).is_err());
    }
}
