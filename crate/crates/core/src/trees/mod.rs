//! Tree state spaces: ranked ultrametric trees for the coalescent prior and
//! unrooted binary trees for the uniform prior.

mod canonical;
pub mod enumerate;
mod ranked;
mod unrooted;

pub use canonical::{canonical_topology, CanonicalMode, TopologyKey};
pub use ranked::{extend_kingman, psi_kingman, restrict_kingman, RankedTree};
pub(crate) use unrooted::star3;
pub use unrooted::{extend_uniform, psi_uniform, restrict_uniform, EdgeEnd, LeafChoice, UnrootedTree};

use crate::error::{Error, Result};

/// Either kind of tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Tree {
    Ranked(RankedTree),
    Unrooted(UnrootedTree),
}

impl Tree {
    pub fn n_leaves(&self) -> usize {
        match self {
            Tree::Ranked(t) => t.n_leaves(),
            Tree::Unrooted(t) => t.n_leaves(),
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            Tree::Ranked(t) => t.labels(),
            Tree::Unrooted(t) => t.labels(),
        }
    }

    pub fn branch_map(&self) -> BranchMap {
        match self {
            Tree::Ranked(t) => t.branch_map(),
            Tree::Unrooted(t) => t.branch_map(),
        }
    }

    /// The parameter vector `x`: holding times or branch lengths.
    pub fn parameters(&self) -> &[f64] {
        match self {
            Tree::Ranked(t) => t.holding_times(),
            Tree::Unrooted(t) => t.lengths(),
        }
    }

    pub fn with_parameters(&self, x: Vec<f64>) -> Result<Tree> {
        Ok(match self {
            Tree::Ranked(t) => Tree::Ranked(t.with_holding_times(x)?),
            Tree::Unrooted(t) => Tree::Unrooted(t.with_lengths(x)?),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Tree::Ranked(_) => "ranked",
            Tree::Unrooted(_) => "unrooted",
        }
    }
}

impl From<RankedTree> for Tree {
    fn from(t: RankedTree) -> Self {
        Tree::Ranked(t)
    }
}

impl From<UnrootedTree> for Tree {
    fn from(t: UnrootedTree) -> Self {
        Tree::Unrooted(t)
    }
}

/// One branch `(u, v)` with its length `psi_T(x)_(u,v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub u: usize,
    pub v: usize,
    pub length: f64,
    /// True iff `u` or `v` is a leaf.
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchMap {
    branches: Vec<Branch>,
}

impl BranchMap {
    pub fn new(branches: Vec<Branch>) -> Self {
        Self { branches }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.branches.iter().map(|b| b.length).sum()
    }

    pub fn max_length(&self) -> f64 {
        self.branches.iter().map(|b| b.length).fold(0.0, f64::max)
    }

    pub fn min_external_length(&self) -> Result<f64> {
        self.branches
            .iter()
            .filter(|b| b.external)
            .map(|b| b.length)
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::InvalidTree("no external branches".into()))
    }

    /// `min(min external length / 2, 1 / (2 eta))`.
    pub fn tilde_f(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0) {
            return Err(Error::OutOfRange(format!("eta = {eta} must be positive")));
        }
        Ok((self.min_external_length()? / 2.0).min(1.0 / (2.0 * eta)))
    }

    /// Membership in `L_f`: every external branch longer than `f`.
    pub fn in_lower_set(&self, f: f64) -> bool {
        self.branches.iter().filter(|b| b.external).all(|b| b.length > f)
    }

    /// Membership in `U_g`: every branch shorter than `g`.
    pub fn in_upper_set(&self, g: f64) -> bool {
        self.branches.iter().all(|b| b.length < g)
    }
}

pub fn min_external_length(branches: &BranchMap) -> Result<f64> {
    branches.min_external_length()
}

pub fn tilde_f(branches: &BranchMap, eta: f64) -> Result<f64> {
    branches.tilde_f(eta)
}

pub(crate) fn binom2(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Number of ranked topologies on `n` labelled leaves, `prod_{i=2}^n binom(i, 2)`.
pub fn ranked_topology_count(n: usize) -> f64 {
    (2..=n).map(binom2).product()
}

pub fn log_ranked_topology_count(n: usize) -> f64 {
    (2..=n).map(|i| binom2(i).ln()).sum()
}

/// Number of unrooted binary topologies on `n >= 3` labelled leaves, `(2n - 5)!!`.
pub fn unrooted_topology_count(n: usize) -> f64 {
    log_unrooted_topology_count(n).exp().round()
}

pub fn log_unrooted_topology_count(n: usize) -> f64 {
    (3..n).map(|j| ((2 * j - 3) as f64).ln()).sum()
}

const FORBIDDEN: &[char] = &['(', ')', ',', ':', ';', '[', ']', '{', '}', '\'', '"'];

pub(crate) fn validate_labels(labels: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if l.is_empty() || l.chars().any(|c| c.is_whitespace() || FORBIDDEN.contains(&c)) {
            return Err(Error::InvalidTree(format!("leaf label {l:?} is empty or contains reserved characters")));
        }
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidTree(format!("duplicate leaf label {l:?}")));
        }
    }
    Ok(())
}

/// Order leaf labels: numerically when they are exactly `1..=n`, otherwise
/// lexicographically.
pub fn leaf_order(labels: &[String]) -> Vec<String> {
    let mut out = labels.to_vec();
    let n = out.len();
    let mut nums: Vec<usize> = out.iter().filter_map(|l| l.parse().ok()).collect();
    nums.sort_unstable();
    if nums.len() == n && nums.iter().enumerate().all(|(i, &v)| v == i + 1) {
        out.sort_by_key(|l| l.parse::<usize>().unwrap());
    } else {
        out.sort();
    }
    out
}
