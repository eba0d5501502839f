//! The coalescent and uniform tree priors, nested prior sequences, and the
//! shape and tail diagnostics that go with them.

mod shape;

pub use shape::{shape_diagnostics, tail_bounds, ShapeRow, TailBounds};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{
    binom2, extend_kingman, extend_uniform, log_ranked_topology_count, log_unrooted_topology_count, star3,
    CanonicalMode, RankedTree, Tree, UnrootedTree,
};

/// Kingman coalescent on ranked trees with `n` leaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KingmanPrior {
    pub n: usize,
}

/// Uniform topology with independent `Exp(lambda)` branch lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub n: usize,
    pub lambda: f64,
}

impl KingmanPrior {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("Kingman prior needs n >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    /// Rate of `x_i`, the holding time with `i + 1` lineages.
    pub fn holding_rate(i: usize) -> f64 {
        binom2(i + 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RankedTree {
        let n = self.n;
        let mut alive: Vec<usize> = (0..n).collect();
        let mut merges = Vec::with_capacity(n - 1);
        let mut holding = vec![0.0; n - 1];
        for j in 0..n - 1 {
            let m = alive.len();
            holding[m - 2] = Exp::new(binom2(m)).expect("positive").sample(rng).max(f64::MIN_POSITIVE);
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            let (x, y) = (alive[a], alive[b]);
            merges.push((x.min(y), x.max(y)));
            alive.retain(|&v| v != x && v != y);
            alive.push(n + j);
        }
        RankedTree::new(RankedTree::integer_labels(n), merges, holding).expect("sampled tree is valid")
    }

    /// Normalized log density: uniform over ranked topologies, independent
    /// exponential holding times.
    pub fn log_density(&self, tree: &RankedTree) -> Result<f64> {
        if tree.n_leaves() != self.n {
            return Err(Error::Config(format!("prior has n = {}, tree has {}", self.n, tree.n_leaves())));
        }
        let mut out = -log_ranked_topology_count(self.n);
        for (idx, &x) in tree.holding_times().iter().enumerate() {
            let rate = Self::holding_rate(idx + 1);
            out += rate.ln() - rate * x;
        }
        Ok(out)
    }
}

impl UniformPrior {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("uniform prior needs n >= 4, got {n}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { n, lambda })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UnrootedTree {
        let exp = Exp::new(self.lambda).expect("positive");
        let mut draw = || exp.sample(rng).max(f64::MIN_POSITIVE);
        let lengths = [draw(), draw(), draw()];
        let labels = RankedTree::integer_labels(3);
        let mut t = star3([labels[0].clone(), labels[1].clone(), labels[2].clone()], lengths);
        while t.n_leaves() < self.n {
            t = extend_uniform(&t, self.lambda, rng).expect("positive rate");
        }
        t
    }

    pub fn log_density(&self, tree: &UnrootedTree) -> Result<f64> {
        if tree.n_leaves() != self.n {
            return Err(Error::Config(format!("prior has n = {}, tree has {}", self.n, tree.n_leaves())));
        }
        let m = (2 * self.n - 3) as f64;
        let l1: f64 = tree.lengths().iter().sum();
        Ok(m * self.lambda.ln() - log_unrooted_topology_count(self.n) - self.lambda * l1)
    }
}

/// Serializable prior choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prior {
    Kingman(KingmanPrior),
    Uniform(UniformPrior),
}

impl Prior {
    pub fn kingman(n: usize) -> Result<Self> {
        KingmanPrior::new(n).map(Prior::Kingman)
    }

    pub fn uniform(n: usize, lambda: f64) -> Result<Self> {
        UniformPrior::new(n, lambda).map(Prior::Uniform)
    }

    pub fn n(&self) -> usize {
        match self {
            Prior::Kingman(p) => p.n,
            Prior::Uniform(p) => p.n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::Kingman(_) => "kingman",
            Prior::Uniform(_) => "uniform",
        }
    }

    /// Length of the parameter vector `x`.
    pub fn dimension(&self) -> usize {
        match self {
            Prior::Kingman(p) => p.n - 1,
            Prior::Uniform(p) => 2 * p.n - 3,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Tree {
        match self {
            Prior::Kingman(p) => Tree::Ranked(p.sample(rng)),
            Prior::Uniform(p) => Tree::Unrooted(p.sample(rng)),
        }
    }

    pub fn log_density(&self, tree: &Tree) -> Result<f64> {
        match (self, tree) {
            (Prior::Kingman(p), Tree::Ranked(t)) => p.log_density(t),
            (Prior::Uniform(p), Tree::Unrooted(t)) => p.log_density(t),
            _ => Err(Error::Config(format!("{} prior cannot score a {} tree", self.name(), tree.kind_name()))),
        }
    }

    /// Log of the number of topologies the prior is uniform over.
    pub fn log_topology_count(&self) -> f64 {
        match self {
            Prior::Kingman(p) => log_ranked_topology_count(p.n),
            Prior::Uniform(p) => log_unrooted_topology_count(p.n),
        }
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        match self {
            Prior::Kingman(_) => Prior::kingman(n),
            Prior::Uniform(p) => Prior::uniform(n, p.lambda),
        }
    }
}

/// Prior probability of the topology class of `tree` at the granularity
/// of `mode`.
pub fn topology_prior_probability(prior: &Prior, tree: &Tree, mode: CanonicalMode) -> Result<f64> {
    let log_count = prior.log_topology_count();
    match (prior, tree, mode) {
        (Prior::Kingman(_), Tree::Ranked(_), CanonicalMode::Ranked) => Ok((-log_count).exp()),
        (Prior::Kingman(_), Tree::Ranked(t), CanonicalMode::RootedUnranked) => {
            Ok((log_rankings(&rooted_children(t), t.root(), t.n_leaves()) - log_count).exp())
        }
        (Prior::Kingman(_), Tree::Ranked(t), CanonicalMode::Unrooted) => {
            let n = t.n_leaves();
            if n < 3 {
                return Err(Error::IncompatibleMode { mode: "unrooted", kind: "two-leaf ranked" });
            }
            let adj = unrooted_adjacency(t);
            let mut total = 0.0;
            for (a, b) in edges_of(&adj) {
                total += (log_rankings_rooted_on_edge(&adj, a, b, n) - log_count).exp();
            }
            Ok(total)
        }
        (Prior::Uniform(_), Tree::Unrooted(_), CanonicalMode::Unrooted) => Ok((-log_count).exp()),
        (Prior::Uniform(_), Tree::Unrooted(_), m) => Err(Error::IncompatibleMode { mode: m.name(), kind: "unrooted" }),
        _ => Err(Error::Config(format!("{} prior cannot score a {} tree", prior.name(), tree.kind_name()))),
    }
}

fn rooted_children(t: &RankedTree) -> Vec<Vec<usize>> {
    let n = t.n_leaves();
    let mut ch = vec![Vec::new(); 2 * n - 1];
    for (j, &(a, b)) in t.merges().iter().enumerate() {
        ch[n + j] = vec![a, b];
    }
    ch
}

/// Log number of rankings of a rooted binary shape: `(n-1)! / prod_v I_v`
/// with `I_v` the number of internal nodes below and including `v`.
fn log_rankings(children: &[Vec<usize>], root: usize, n: usize) -> f64 {
    fn internal_count(ch: &[Vec<usize>], v: usize, n: usize, acc: &mut f64) -> usize {
        if v < n {
            return 0;
        }
        let c = 1 + ch[v].iter().map(|&c| internal_count(ch, c, n, acc)).sum::<usize>();
        *acc += (c as f64).ln();
        c
    }
    let mut log_prod = 0.0;
    internal_count(children, root, n, &mut log_prod);
    let log_fact: f64 = (1..n).map(|i| (i as f64).ln()).sum();
    log_fact - log_prod
}

fn unrooted_adjacency(t: &RankedTree) -> Vec<Vec<usize>> {
    let n = t.n_leaves();
    let mut adj = vec![Vec::new(); 2 * n - 2];
    let (r1, r2) = t.merges()[n - 2];
    for (j, &(a, b)) in t.merges().iter().enumerate().take(n - 2) {
        for c in [a, b] {
            adj[c].push(n + j);
            adj[n + j].push(c);
        }
    }
    adj[r1].push(r2);
    adj[r2].push(r1);
    adj
}

fn edges_of(adj: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (a, nb) in adj.iter().enumerate() {
        for &b in nb {
            if a < b {
                out.push((a, b));
            }
        }
    }
    out
}

fn log_rankings_rooted_on_edge(adj: &[Vec<usize>], a: usize, b: usize, n: usize) -> f64 {
    // Orient away from a virtual root placed on edge (a, b).
    let root = adj.len();
    let mut children = vec![Vec::new(); adj.len() + 1];
    children[root] = vec![a, b];
    let mut stack = vec![(a, b), (b, a)];
    while let Some((v, from)) = stack.pop() {
        for &w in &adj[v] {
            if w != from {
                children[v].push(w);
                stack.push((w, v));
            }
        }
    }
    log_rankings(&children, root, n)
}

/// A nested sequence `(T_n, x_n)` for `n = n_min..=n_max`, each prior
/// distributed, each the restriction of the next.
pub fn nested_sequence<R: Rng + ?Sized>(prior: &Prior, n_min: usize, n_max: usize, rng: &mut R) -> Result<Vec<Tree>> {
    if n_max < n_min {
        return Err(Error::Config(format!("n_max {n_max} is below n_min {n_min}")));
    }
    let first = prior.with_n(n_min)?.sample(rng);
    let mut out = Vec::with_capacity(n_max - n_min + 1);
    out.push(first);
    for _ in n_min..n_max {
        let next = match (out.last().expect("nonempty"), prior) {
            (Tree::Ranked(t), _) => Tree::Ranked(extend_kingman(t, rng)),
            (Tree::Unrooted(t), Prior::Uniform(p)) => Tree::Unrooted(extend_uniform(t, p.lambda, rng)?),
            _ => unreachable!("sequence kind follows the prior"),
        };
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::canonical_topology;
    use crate::trees::enumerate::{ranked_topologies, unrooted_topologies};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn two_leaf_density_is_rate_one_exponential() {
        let p = KingmanPrior::new(2).unwrap();
        let t = RankedTree::new(RankedTree::integer_labels(2), vec![(0, 1)], vec![0.7]).unwrap();
        assert!((p.log_density(&t).unwrap() + 0.7).abs() < 1e-15);
    }

    #[test]
    fn density_ratio_is_exact_exponential_ratio() {
        let p = KingmanPrior::new(4).unwrap();
        let t =
            RankedTree::new(RankedTree::integer_labels(4), vec![(0, 1), (2, 3), (4, 5)], vec![1.0, 0.5, 0.2]).unwrap();
        let s = t.with_holding_times(vec![1.5, 0.5, 0.1]).unwrap();
        let d = p.log_density(&s).unwrap() - p.log_density(&t).unwrap();
        // rates 1, 3, 6 for x_1, x_2, x_3.
        assert!((d - (-(0.5) + 6.0 * 0.1)).abs() < 1e-13);
    }

    #[test]
    fn uniform_boundary_density() {
        let p = UniformPrior::new(5, 1.0).unwrap();
        let t = unrooted_topologies(5).remove(0);
        let want = -15f64.ln() - t.lengths().iter().sum::<f64>();
        assert!((p.log_density(&t).unwrap() - want).abs() < 1e-13);
    }

    /// Oracle for the ranked-to-rooted grouping: count ranked topologies per
    /// rooted shape by enumeration.
    #[test]
    fn rooted_class_probability_matches_enumeration() {
        let prior = Prior::kingman(5).unwrap();
        let all = ranked_topologies(5);
        let mut counts: HashMap<_, usize> = HashMap::new();
        for t in &all {
            let key = canonical_topology(&Tree::Ranked(t.clone()), CanonicalMode::RootedUnranked).unwrap();
            *counts.entry(key).or_default() += 1;
        }
        let mut ucounts: HashMap<_, usize> = HashMap::new();
        for t in &all {
            let key = canonical_topology(&Tree::Ranked(t.clone()), CanonicalMode::Unrooted).unwrap();
            *ucounts.entry(key).or_default() += 1;
        }
        for t in all.iter().step_by(7) {
            let tree = Tree::Ranked(t.clone());
            let key = canonical_topology(&tree, CanonicalMode::RootedUnranked).unwrap();
            let p = topology_prior_probability(&prior, &tree, CanonicalMode::RootedUnranked).unwrap();
            assert!((p - counts[&key] as f64 / all.len() as f64).abs() < 1e-12);
            let key = canonical_topology(&tree, CanonicalMode::Unrooted).unwrap();
            let p = topology_prior_probability(&prior, &tree, CanonicalMode::Unrooted).unwrap();
            assert!((p - ucounts[&key] as f64 / all.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_sequences_restrict() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = nested_sequence(&Prior::kingman(2).unwrap(), 4, 9, &mut rng).unwrap();
        for w in seq.windows(2) {
            let (Tree::Ranked(a), Tree::Ranked(b)) = (&w[0], &w[1]) else { panic!() };
            assert_eq!(&b.restrict(a.n_leaves()).unwrap(), a);
        }
        let seq = nested_sequence(&Prior::uniform(4, 2.0).unwrap(), 4, 9, &mut rng).unwrap();
        for w in seq.windows(2) {
            let (Tree::Unrooted(a), Tree::Unrooted(b)) = (&w[0], &w[1]) else { panic!() };
            assert_eq!(&b.restrict_leaf(a.n_leaves()).unwrap(), a);
        }
        assert_eq!(seq.len(), 6);
    }

    #[test]
    fn mismatched_sizes_are_errors() {
        let p = Prior::kingman(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Prior::kingman(5).unwrap().sample(&mut rng);
        assert!(p.log_density(&t).is_err());
        assert!(Prior::uniform(3, 1.0).is_err());
        assert!(Prior::uniform(5, 0.0).is_err());
    }
}
