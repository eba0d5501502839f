use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::KingmanPrior;
use crate::trees::{RankedTree, Tree, UnrootedTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    BranchScale,
    AllScale,
    Nni,
    RankedNeighbor,
    NodeAge,
}

impl ProposalKind {
    pub const ALL: [ProposalKind; 5] =
        [Self::BranchScale, Self::AllScale, Self::Nni, Self::RankedNeighbor, Self::NodeAge];

    pub fn name(self) -> &'static str {
        match self {
            Self::BranchScale => "branch-scale",
            Self::AllScale => "all-scale",
            Self::Nni => "nni",
            Self::RankedNeighbor => "ranked-neighbor",
            Self::NodeAge => "node-age",
        }
    }

    pub fn applies_to(self, tree: &Tree) -> bool {
        match (self, tree) {
            (Self::BranchScale | Self::AllScale, _) => true,
            (Self::Nni, Tree::Unrooted(t)) => t.n_leaves() >= 4,
            (Self::RankedNeighbor, Tree::Ranked(t)) => t.n_leaves() >= 3,
            (Self::NodeAge, Tree::Ranked(_)) => true,
            _ => false,
        }
    }
}

/// A proposed state. `gibbs` marks a draw from the exact prior conditional,
/// whose prior and proposal terms cancel in the acceptance ratio.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub tree: Tree,
    pub log_hastings: f64,
    pub gibbs: bool,
}

/// Draw a proposal of `kind`. `Ok(None)` is a null move (the drawn
/// modification is not valid for this state) and leaves the state unchanged.
pub fn propose<R: Rng + ?Sized>(tree: &Tree, kind: ProposalKind, scale: f64, rng: &mut R) -> Result<Option<Proposal>> {
    if !kind.applies_to(tree) {
        return Err(Error::Config(format!("proposal {} does not apply to {} trees", kind.name(), tree.kind_name())));
    }
    let plain = |tree: Tree, log_hastings: f64| Proposal { tree, log_hastings, gibbs: false };
    Ok(match kind {
        ProposalKind::BranchScale => {
            let u = rng.random_range(-scale..scale);
            let mut x = tree.parameters().to_vec();
            let i = rng.random_range(0..x.len());
            x[i] *= u.exp();
            tree.with_parameters(x).ok().map(|t| plain(t, u))
        }
        ProposalKind::AllScale => {
            let u = rng.random_range(-scale..scale);
            let x: Vec<f64> = tree.parameters().iter().map(|v| v * u.exp()).collect();
            let m = x.len() as f64;
            tree.with_parameters(x).ok().map(|t| plain(t, m * u))
        }
        ProposalKind::Nni => {
            let Tree::Unrooted(t) = tree else { unreachable!() };
            Some(plain(Tree::Unrooted(random_nni(t, rng)?), 0.0))
        }
        ProposalKind::RankedNeighbor => {
            let Tree::Ranked(t) = tree else { unreachable!() };
            let n = t.n_leaves();
            let merges = if n >= 3 && rng.random::<bool>() {
                swap_adjacent(t.merges(), n, rng.random_range(0..n - 2))
            } else {
                let j = rng.random_range(0..n - 1);
                match repick_choices(n, j) {
                    0 => None,
                    c => repick_pair(t.merges(), n, j, rng.random_range(0..c)),
                }
            };
            merges.map(|m| t.with_merges(m).map(|t| plain(Tree::Ranked(t), 0.0))).transpose()?
        }
        ProposalKind::NodeAge => {
            let Tree::Ranked(t) = tree else { unreachable!() };
            let mut x = t.holding_times().to_vec();
            let i = rng.random_range(0..x.len());
            let rate = KingmanPrior::holding_rate(i + 1);
            let new = Exp::new(rate).expect("positive rate").sample(rng);
            let log_hastings = rate * (new - x[i]);
            x[i] = new;
            t.with_holding_times(x).ok().map(|t| Proposal { tree: Tree::Ranked(t), log_hastings, gibbs: true })
        }
    })
}

/// Lineages alive just before merge event `j`.
fn alive_before(merges: &[(usize, usize)], n: usize, j: usize) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..n).collect();
    for (e, &(a, b)) in merges[..j].iter().enumerate() {
        alive.retain(|&v| v != a && v != b);
        alive.push(n + e);
    }
    alive.sort_unstable();
    alive
}

fn relabel_later(merges: &mut [(usize, usize)], from: usize, map: impl Fn(usize) -> usize) {
    for pair in &mut merges[from..] {
        let (a, b) = (map(pair.0), map(pair.1));
        *pair = (a.min(b), a.max(b));
    }
}

/// Exchange the order of merge events `j` and `j + 1`; `None` when event
/// `j + 1` uses the lineage created by event `j`.
pub fn swap_adjacent(merges: &[(usize, usize)], n: usize, j: usize) -> Option<Vec<(usize, usize)>> {
    let created = n + j;
    let (first, second) = (merges[j], merges[j + 1]);
    if second.0 == created || second.1 == created {
        return None;
    }
    let mut out = merges.to_vec();
    out[j] = second;
    out[j + 1] = first;
    let (p, q) = (created, created + 1);
    relabel_later(&mut out, j + 2, |v| {
        if v == p {
            q
        } else if v == q {
            p
        } else {
            v
        }
    });
    Some(out)
}

/// Number of alternative pairs at merge event `j`.
pub fn repick_choices(n: usize, j: usize) -> usize {
    let m = n - j;
    (m * (m - 1) / 2).saturating_sub(1)
}

/// Merge the `pick`-th alternative pair of the lineages alive at event `j`
/// (pairs in lexicographic order, the current pair skipped). Later events
/// that referred to a lineage now consumed refer to the lineage freed in
/// exchange, matched in sorted order.
pub fn repick_pair(merges: &[(usize, usize)], n: usize, j: usize, pick: usize) -> Option<Vec<(usize, usize)>> {
    let alive = alive_before(merges, n, j);
    let m = alive.len();
    let old = merges[j];
    let new = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .map(|(a, b)| (alive[a], alive[b]))
        .filter(|&p| p != old)
        .nth(pick)?;
    let consumed: Vec<usize> = [new.0, new.1].into_iter().filter(|&v| v != old.0 && v != old.1).collect();
    let freed: Vec<usize> = [old.0, old.1].into_iter().filter(|&v| v != new.0 && v != new.1).collect();
    let mut out = merges.to_vec();
    out[j] = new;
    relabel_later(&mut out, j + 1, |v| consumed.iter().position(|&c| c == v).map_or(v, |i| freed[i]));
    Some(out)
}

/// NNI across a uniformly chosen internal edge to one of its two neighbours.
pub fn random_nni<R: Rng + ?Sized>(tree: &UnrootedTree, rng: &mut R) -> Result<UnrootedTree> {
    let internal = tree.internal_edges();
    let edge = internal[rng.random_range(0..internal.len())];
    let (u, v) = tree.edges()[edge];
    let adj = tree.adjacency();
    let others = |node: usize| -> Vec<usize> {
        let mut e: Vec<usize> = adj[node].iter().map(|&(_, e)| e).filter(|&e| e != edge).collect();
        e.sort_unstable();
        e
    };
    let a = others(u)[0];
    let c = others(v)[rng.random_range(0..2)];
    tree.nni(edge, a, c)
}

/// Proposal graph neighbours of a ranked tree: every swap and re-pick result.
pub fn ranked_neighbors(tree: &RankedTree) -> Vec<RankedTree> {
    let n = tree.n_leaves();
    let merges = tree.merges();
    let mut out = Vec::new();
    for j in 0..n.saturating_sub(2) {
        if let Some(m) = swap_adjacent(merges, n, j) {
            out.push(tree.with_merges(m).expect("valid swap"));
        }
    }
    for j in 0..n - 1 {
        for pick in 0..repick_choices(n, j) {
            let m = repick_pair(merges, n, j, pick).expect("pick in range");
            out.push(tree.with_merges(m).expect("valid re-pick"));
        }
    }
    out
}
