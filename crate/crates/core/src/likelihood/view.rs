use crate::error::{Error, Result};
use crate::trees::{RankedTree, Tree, UnrootedTree};

/// A rooted orientation of a tree with a length on every non-root node's
/// parent branch.
///
/// Leaves are nodes `0..n` in the tree's leaf order. Each non-root node owns
/// exactly one branch, identified by a stable branch id: the child node id
/// for ranked trees and the edge index for unrooted trees.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedView {
    n_leaves: usize,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    length: Vec<f64>,
    branch: Vec<Option<usize>>,
    preorder: Vec<usize>,
}

impl RootedView {
    /// Build from explicit parent pointers; lengths may be zero. Branch ids
    /// are assigned in node order, skipping the root.
    pub fn from_parents(n_leaves: usize, parent: Vec<Option<usize>>, length: Vec<f64>) -> Result<Self> {
        let nodes = parent.len();
        if length.len() != nodes {
            return Err(Error::InvalidTree("one length per node is required".into()));
        }
        let roots: Vec<usize> = (0..nodes).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("expected one root, found {}", roots.len())));
        }
        let mut next = 0;
        let branch = parent
            .iter()
            .map(|p| {
                p.map(|_| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self::assemble(n_leaves, roots[0], parent, length, branch)
    }

    pub fn from_ranked(tree: &RankedTree) -> Self {
        let n = tree.n_leaves();
        let parent = tree.parents();
        let mut length = vec![0.0; 2 * n - 1];
        for b in tree.branch_map().branches() {
            length[b.v] = b.length;
        }
        let branch = (0..2 * n - 1).map(|v| parent[v].map(|_| v)).collect();
        Self::assemble(n, tree.root(), parent, length, branch).expect("ranked trees are valid rooted trees")
    }

    /// Orient an unrooted tree away from the internal node `root`.
    pub fn from_unrooted(tree: &UnrootedTree, root: usize) -> Result<Self> {
        let n = tree.n_leaves();
        let nodes = tree.node_count();
        if root < n || root >= nodes {
            return Err(Error::OutOfRange(format!("root {root} is not an internal node")));
        }
        let adj = tree.adjacency();
        let mut parent = vec![None; nodes];
        let mut length = vec![0.0; nodes];
        let mut branch = vec![None; nodes];
        let mut stack = vec![root];
        let mut seen = vec![false; nodes];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &(v, e) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    length[v] = tree.lengths()[e];
                    branch[v] = Some(e);
                    stack.push(v);
                }
            }
        }
        Self::assemble(n, root, parent, length, branch)
    }

    /// Ranked trees are rooted at their final merger; unrooted trees at the
    /// internal node `n`, which keeps its identity under extension.
    pub fn from_tree(tree: &Tree) -> Self {
        match tree {
            Tree::Ranked(t) => Self::from_ranked(t),
            Tree::Unrooted(t) => Self::from_unrooted(t, t.n_leaves()).expect("node n is internal in a valid tree"),
        }
    }

    fn assemble(
        n_leaves: usize,
        root: usize,
        parent: Vec<Option<usize>>,
        length: Vec<f64>,
        branch: Vec<Option<usize>>,
    ) -> Result<Self> {
        let nodes = parent.len();
        if let Some(bad) = length.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidTree(format!("branch length {bad} is negative or non-finite")));
        }
        let mut children = vec![Vec::new(); nodes];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= nodes {
                    return Err(Error::InvalidTree(format!("parent {p} out of range")));
                }
                children[p].push(v);
            }
        }
        if (0..n_leaves).any(|v| !children[v].is_empty()) || (n_leaves..nodes).any(|v| children[v].is_empty()) {
            return Err(Error::InvalidTree("leaves must be nodes 0..n and internal nodes must have children".into()));
        }
        let mut preorder = Vec::with_capacity(nodes);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            preorder.push(u);
            stack.extend(children[u].iter().rev());
        }
        if preorder.len() != nodes {
            return Err(Error::InvalidTree("parent pointers do not form a tree".into()));
        }
        Ok(Self { n_leaves, root, parent, children, length, branch, preorder })
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Length of the branch above `node` (0 for the root).
    pub fn length(&self, node: usize) -> f64 {
        self.length[node]
    }

    pub fn branch_id(&self, node: usize) -> Option<usize> {
        self.branch[node]
    }

    pub fn branch_count(&self) -> usize {
        self.node_count() - 1
    }

    /// Parents before children.
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    /// Children before parents.
    pub fn postorder(&self) -> impl Iterator<Item = usize> + '_ {
        self.preorder.iter().rev().copied()
    }

    /// Non-leaf nodes, the root included.
    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.n_leaves..self.node_count()
    }

    /// Node owning each branch id.
    pub fn nodes_by_branch(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.branch_count()];
        for (v, b) in self.branch.iter().enumerate() {
            if let Some(b) = *b {
                out[b] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_view_branch_lengths() {
        let labels = RankedTree::integer_labels(3);
        let t = RankedTree::new(labels, vec![(0, 1), (2, 3)], vec![2.0, 0.5]).unwrap();
        let v = RootedView::from_ranked(&t);
        assert_eq!(v.root(), 4);
        assert_eq!(v.length(0), 0.5);
        assert_eq!(v.length(2), 2.5);
        assert_eq!(v.length(3), 2.0);
        assert_eq!(*v.preorder().first().unwrap(), 4);
    }

    #[test]
    fn unrooted_view_every_root() {
        let t = UnrootedTree::new(
            RankedTree::integer_labels(4),
            vec![(0, 4), (1, 4), (4, 5), (2, 5), (3, 5)],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
        )
        .unwrap();
        for root in [4, 5] {
            let v = RootedView::from_unrooted(&t, root).unwrap();
            assert_eq!(v.branch_count(), 5);
            let mut ids: Vec<usize> = (0..6).filter_map(|n| v.branch_id(n)).collect();
            ids.sort();
            assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        }
        assert!(RootedView::from_unrooted(&t, 0).is_err());
    }

    #[test]
    fn from_parents_rejects_cycles() {
        let bad = RootedView::from_parents(2, vec![Some(2), Some(2), Some(3), Some(2)], vec![0.0; 4]);
        assert!(bad.is_err());
    }
}
