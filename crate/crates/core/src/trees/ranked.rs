use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{binom2, validate_labels, Branch, BranchMap};
use crate::error::{Error, Result};

/// A ranked, ultrametric, rooted binary tree.
///
/// Leaves are nodes `0..n`. Merge event `j` (counted from the leaves, so
/// event 0 is the first coalescence looking back in time) joins two live
/// lineages and creates node `n + j`; the root is node `2n - 2`.
///
/// Holding times follow the coalescent convention: `holding[i - 1]` is
/// `x_i`, the time spent with `i + 1` lineages alive. So `x_{n-1}` is the
/// time from the leaves to the first merger and `x_1` separates the last
/// two mergers.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedTree {
    labels: Vec<String>,
    merges: Vec<(usize, usize)>,
    holding: Vec<f64>,
}

impl RankedTree {
    pub fn new(labels: Vec<String>, merges: Vec<(usize, usize)>, holding: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::InvalidTree(format!("ranked tree needs at least 2 leaves, got {n}")));
        }
        validate_labels(&labels)?;
        if merges.len() != n - 1 {
            return Err(Error::InvalidTree(format!("expected {} merge events, got {}", n - 1, merges.len())));
        }
        if holding.len() != n - 1 {
            return Err(Error::InvalidTree(format!("expected {} holding times, got {}", n - 1, holding.len())));
        }
        if let Some(bad) = holding.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidTree(format!("holding time {bad} is not strictly positive")));
        }
        let mut alive = vec![false; 2 * n - 1];
        alive[..n].iter_mut().for_each(|a| *a = true);
        let mut merges = merges;
        for (j, pair) in merges.iter_mut().enumerate() {
            let (a, b) = (pair.0.min(pair.1), pair.0.max(pair.1));
            if a == b || b >= n + j || !alive[a] || !alive[b] {
                return Err(Error::InvalidTree(format!("merge event {j} ({a}, {b}) does not join two live lineages")));
            }
            alive[a] = false;
            alive[b] = false;
            alive[n + j] = true;
            *pair = (a, b);
        }
        Ok(Self { labels, merges, holding })
    }

    /// Same shape and times with new leaf labels, matched by position.
    pub fn with_labels(&self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_leaves() {
            return Err(Error::InvalidTree(format!("{} labels for {} leaves", labels.len(), self.n_leaves())));
        }
        validate_labels(&labels)?;
        Ok(Self { labels, ..self.clone() })
    }

    /// Labels `1..=n`, the convention used for nested sequences.
    pub fn integer_labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    /// `x_1, ..., x_{n-1}` in storage order.
    pub fn holding_times(&self) -> &[f64] {
        &self.holding
    }

    pub fn node_count(&self) -> usize {
        2 * self.n_leaves() - 1
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves()
    }

    /// Replace the holding times, keeping the ranked topology.
    pub fn with_holding_times(&self, holding: Vec<f64>) -> Result<Self> {
        Self::new(self.labels.clone(), self.merges.clone(), holding)
    }

    /// Replace the merge sequence, keeping labels and holding times.
    pub fn with_merges(&self, merges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(self.labels.clone(), merges, self.holding.clone())
    }

    /// Index into `holding` of the interval that precedes merge event `j`.
    fn interval_before(&self, event: usize) -> usize {
        self.n_leaves() - event - 2
    }

    /// Event that created `node`, or `None` for leaves.
    pub fn event_of(&self, node: usize) -> Option<usize> {
        node.checked_sub(self.n_leaves())
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        let n = self.n_leaves();
        let mut parent = vec![None; 2 * n - 1];
        for (j, &(a, b)) in self.merges.iter().enumerate() {
            parent[a] = Some(n + j);
            parent[b] = Some(n + j);
        }
        parent
    }

    /// Height of each node above the leaves.
    pub fn heights(&self) -> Vec<f64> {
        let n = self.n_leaves();
        let mut h = vec![0.0; 2 * n - 1];
        let mut t = 0.0;
        for j in 0..n - 1 {
            t += self.holding[self.interval_before(j)];
            h[n + j] = t;
        }
        h
    }

    /// Holding-time indices (storage order) summed into the branch above `child`.
    pub fn branch_intervals(&self, child: usize, parent: usize) -> std::ops::RangeInclusive<usize> {
        let first_event = self.event_of(child).map_or(0, |e| e + 1);
        let last_event = self.event_of(parent).expect("parent is internal");
        self.interval_before(last_event)..=self.interval_before(first_event)
    }

    /// Sum of the holding times `x_1..x_{n-1}`, the root height.
    pub fn total_height(&self) -> f64 {
        self.holding.iter().sum()
    }

    /// Split leaf `leaf` into itself and a new leaf labelled `label`, and extend
    /// every external branch by `new_time`, which becomes `x_n`.
    pub fn extend_at(&self, leaf: usize, label: String, new_time: f64) -> Result<Self> {
        let n = self.n_leaves();
        if leaf >= n {
            return Err(Error::OutOfRange(format!("leaf {leaf} not in 0..{n}")));
        }
        // The split leaf's old lineage now starts at the new merge node n + 1.
        let shift = |x: usize| {
            if x >= n {
                x + 2
            } else if x == leaf {
                n + 1
            } else {
                x
            }
        };
        let mut merges = Vec::with_capacity(n);
        merges.push((leaf, n));
        merges.extend(self.merges.iter().map(|&(a, b)| {
            let (a, b) = (shift(a), shift(b));
            (a.min(b), a.max(b))
        }));
        if !(new_time >= 0.0 && new_time.is_finite()) {
            return Err(Error::InvalidTree(format!("new holding time {new_time} must be finite and nonnegative")));
        }
        let mut holding = self.holding.clone();
        holding.push(1.0);
        let mut labels = self.labels.clone();
        labels.push(label);
        let mut out = Self::new(labels, merges, holding)?;
        // A zero duration is allowed here only, for the coupling checks.
        out.holding[n - 1] = new_time;
        Ok(out)
    }

    /// Label for the next leaf: `n + 1` when the labels are `1..=n`.
    pub fn next_label(&self) -> String {
        next_label(&self.labels)
    }

    /// Restrict to the first `m` leaves with holding times `x_1..x_{m-1}`.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        let n = self.n_leaves();
        if m < 2 || m > n {
            return Err(Error::OutOfRange(format!("restriction size {m} not in 2..={n}")));
        }
        if m == n {
            return Ok(self.clone());
        }
        let mut rep: Vec<Option<usize>> = (0..2 * n - 1).map(|v| (v < m).then_some(v)).collect();
        let mut merges = Vec::with_capacity(m - 1);
        for (j, &(a, b)) in self.merges.iter().enumerate() {
            rep[n + j] = match (rep[a], rep[b]) {
                (Some(ra), Some(rb)) => {
                    merges.push((ra.min(rb), ra.max(rb)));
                    Some(m + merges.len() - 1)
                }
                (Some(r), None) | (None, Some(r)) => Some(r),
                (None, None) => None,
            };
        }
        Self::new(self.labels[..m].to_vec(), merges, self.holding[..m - 1].to_vec())
    }

    /// Branch lengths as sums of holding times.
    pub fn branch_map(&self) -> BranchMap {
        let n = self.n_leaves();
        let parent = self.parents();
        let branches = (0..2 * n - 2)
            .map(|child| {
                let p = parent[child].expect("non-root node has a parent");
                let length = self.branch_intervals(child, p).map(|i| self.holding[i]).sum();
                Branch { u: p, v: child, length, external: child < n }
            })
            .collect();
        BranchMap::new(branches)
    }
}

pub(crate) fn next_label(labels: &[String]) -> String {
    let n = labels.len();
    let integer = labels.iter().enumerate().all(|(i, l)| l.parse::<usize>() == Ok(i + 1));
    if integer {
        (n + 1).to_string()
    } else {
        let mut k = n + 1;
        loop {
            let candidate = format!("t{k}");
            if !labels.contains(&candidate) {
                return candidate;
            }
            k += 1;
        }
    }
}

/// Split a uniformly chosen leaf and extend external branches by
/// `Exp(binom(n + 1, 2))`.
pub fn extend_kingman<R: Rng + ?Sized>(tree: &RankedTree, rng: &mut R) -> RankedTree {
    let n = tree.n_leaves();
    let leaf = rng.random_range(0..n);
    let rate = binom2(n + 1);
    let t = Exp::new(rate).expect("positive rate").sample(rng);
    tree.extend_at(leaf, tree.next_label(), t.max(f64::MIN_POSITIVE)).expect("extension of a valid tree is valid")
}

pub fn restrict_kingman(tree: &RankedTree, m: usize) -> Result<RankedTree> {
    tree.restrict(m)
}

pub fn psi_kingman(tree: &RankedTree) -> BranchMap {
    tree.branch_map()
}
