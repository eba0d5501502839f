//! Event-level site simulation and coupled extension.
//!
//! Each branch carries a Poisson process of rate `nu` (the largest exit rate
//! of `Q`); at every event the allele jumps according to `I + Q / nu`, chosen
//! by the event's uniform mark. The resulting path law is the jump process of
//! `Q`. Keeping the marks rather than target alleles lets a recorded branch
//! be replayed from a different entry allele, which the uniform-prior
//! extension needs when it inserts a segment above an existing branch.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::{Event, EventLog, MutationModel, Provenance, SiteMatrix};
use crate::error::{Error, Result};
use crate::likelihood::RootedView;
use crate::seed;
use crate::trees::{canonical_topology, CanonicalMode, RankedTree, Tree, UnrootedTree};

fn stream_tag() -> u64 {
    seed::tag("sites")
}

fn root_stream(seed: u64, site: usize) -> rand_chacha::ChaCha8Rng {
    seed::rng_from(&[stream_tag(), seed, site as u64, u64::MAX])
}

fn branch_stream(seed: u64, site: usize, branch: usize, generation: usize) -> rand_chacha::ChaCha8Rng {
    seed::rng_from(&[stream_tag(), seed, site as u64, branch as u64, generation as u64])
}

/// Events of a rate-`nu` Poisson process on `[0, length)`.
fn poisson_events<R: Rng>(rng: &mut R, nu: f64, length: f64, shift: f64) -> Vec<Event> {
    let mut out = Vec::new();
    if length <= 0.0 {
        return out;
    }
    let exp = Exp::new(nu).expect("positive uniformization rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= length {
            return out;
        }
        out.push(Event { offset: shift + t, mark: rng.random::<f64>(), allele: 0 });
    }
}

fn draw_root<R: Rng>(rng: &mut R, r: &[f64]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in r.iter().enumerate() {
        acc += p;
        if u < acc {
            return a as u8;
        }
    }
    (r.len() - 1) as u8
}

fn tree_id(tree: &Tree) -> String {
    let mode = match tree {
        Tree::Ranked(_) => CanonicalMode::Ranked,
        Tree::Unrooted(_) => CanonicalMode::Unrooted,
    };
    canonical_topology(tree, mode).map(|k| k.0).unwrap_or_default()
}

fn check_model(tree: &Tree, model: &MutationModel) -> Result<()> {
    if matches!(tree, Tree::Unrooted(_)) && !model.is_reversible() {
        return Err(Error::NotReversible);
    }
    Ok(())
}

/// Simulate `k` independent sites on `tree`.
pub fn simulate_sites(tree: &Tree, model: &MutationModel, k: usize, seed: u64) -> Result<SiteMatrix> {
    if k == 0 {
        return Err(Error::OutOfRange("site count must be positive".into()));
    }
    check_model(tree, model)?;
    let view = RootedView::from_tree(tree);
    let generation = tree.n_leaves();
    let nu = model.uniformization_rate();
    let per_site: Vec<(u8, Vec<Vec<Event>>)> = (0..k)
        .into_par_iter()
        .map(|site| {
            let root = draw_root(&mut root_stream(seed, site), model.root_distribution());
            let mut events = vec![Vec::new(); view.branch_count()];
            for v in 0..view.node_count() {
                if let Some(b) = view.branch_id(v) {
                    let mut rng = branch_stream(seed, site, b, generation);
                    events[b] = poisson_events(&mut rng, nu, view.length(v), 0.0);
                }
            }
            (root, events)
        })
        .collect();
    let (root, events): (Vec<u8>, Vec<Vec<Vec<Event>>>) = per_site.into_iter().unzip();
    let log = EventLog::new(view.branch_count(), root, events.into_iter().flatten().collect())?;
    let provenance = Provenance { tree_id: tree_id(tree), seed };
    Ok(replay(&view, model, tree.labels().to_vec(), log, Some(provenance)))
}

/// Propagate root alleles through the logged events, refreshing each
/// event's recorded allele, and collect the leaf alleles.
pub fn replay(
    view: &RootedView,
    model: &MutationModel,
    labels: Vec<String>,
    mut log: EventLog,
    provenance: Option<Provenance>,
) -> SiteMatrix {
    let n = view.n_leaves();
    let k = log.n_sites();
    let mut alleles = vec![0u8; n * k];
    let mut state = vec![0u8; view.node_count()];
    for site in 0..k {
        state[view.root()] = log.root_allele(site);
        for &v in &view.preorder()[1..] {
            let p = view.parent(v).expect("non-root");
            let b = view.branch_id(v).expect("non-root");
            let mut s = state[p];
            for e in log.events_mut(site, b).iter_mut() {
                s = model.jump(s, e.mark);
                e.allele = s;
            }
            state[v] = s;
        }
        for leaf in 0..n {
            alleles[leaf * k + site] = state[leaf];
        }
    }
    SiteMatrix::from_parts(labels, k, alleles, Some(log), provenance)
}

/// How an extended tree was obtained from its base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Nesting {
    /// Base leaf `split` was split; the new leaf is `n`.
    Kingman { split: usize },
    /// A base edge was subdivided and the new leaf hung from it.
    Uniform,
}

fn nesting(base: &Tree, extended: &Tree) -> Result<Nesting> {
    let n = base.n_leaves();
    if extended.n_leaves() != n + 1 {
        return Err(Error::NotNested(format!("extended tree has {} leaves, base has {n}", extended.n_leaves())));
    }
    match (base, extended) {
        (Tree::Ranked(b), Tree::Ranked(e)) => {
            if &e.restrict(n)? != b {
                return Err(Error::NotNested("restriction of the extended tree differs from the base".into()));
            }
            let (split, new_leaf) = e.merges()[0];
            if new_leaf != n {
                return Err(Error::NotNested("new leaf is not part of the first merger".into()));
            }
            Ok(Nesting::Kingman { split })
        }
        (Tree::Unrooted(b), Tree::Unrooted(e)) => {
            if &e.restrict_leaf(n)? != b {
                return Err(Error::NotNested("restriction of the extended tree differs from the base".into()));
            }
            Ok(Nesting::Uniform)
        }
        _ => Err(Error::NotNested("trees are of different kinds".into())),
    }
}

/// Extend `base`, simulated on `base_tree`, to `extended_tree`. Shared
/// branch segments keep their recorded events; only new segments draw fresh
/// ones.
pub fn extend_sites(
    base: &SiteMatrix,
    base_tree: &Tree,
    extended_tree: &Tree,
    model: &MutationModel,
    seed: u64,
) -> Result<SiteMatrix> {
    let log = base.event_log().ok_or(Error::MissingEventLog)?;
    check_model(extended_tree, model)?;
    let nest = nesting(base_tree, extended_tree)?;
    let base_view = RootedView::from_tree(base_tree);
    let ext_view = RootedView::from_tree(extended_tree);
    if log.n_branches() != base_view.branch_count() {
        return Err(Error::NotNested("event log does not match the base tree".into()));
    }
    let n = base_tree.n_leaves();
    let k = log.n_sites();
    let nu = model.uniformization_rate();
    let generation = extended_tree.n_leaves();
    let ext_nodes = ext_view.nodes_by_branch();
    let per_site: Vec<Vec<Vec<Event>>> = (0..k)
        .into_par_iter()
        .map(|site| {
            let mut events = vec![Vec::new(); ext_view.branch_count()];
            let fresh = |b: usize, len: f64, shift: f64| {
                poisson_events(&mut branch_stream(seed, site, b, generation), nu, len, shift)
            };
            match nest {
                Nesting::Kingman { split } => {
                    let x_new = extended_tree.parameters()[n - 1];
                    for v in 0..base_view.node_count() {
                        let Some(b) = base_view.branch_id(v) else { continue };
                        let recorded = log.events(site, b).to_vec();
                        if v >= n {
                            events[v + 2] = recorded;
                        } else if v == split {
                            events[n + 1] = recorded;
                        } else {
                            let mut all = recorded;
                            all.extend(fresh(v, x_new, base_view.length(v)));
                            events[v] = all;
                        }
                    }
                    events[split] = fresh(split, x_new, 0.0);
                    events[n] = fresh(n, x_new, 0.0);
                }
                Nesting::Uniform => {
                    for (b, slot) in events.iter_mut().enumerate().take(2 * n - 3) {
                        *slot = log.events(site, b).to_vec();
                    }
                    for b in [2 * n - 3, 2 * n - 2] {
                        events[b] = fresh(b, ext_view.length(ext_nodes[b]), 0.0);
                    }
                }
            }
            events
        })
        .collect();
    let log =
        EventLog::new(ext_view.branch_count(), log.root_alleles().to_vec(), per_site.into_iter().flatten().collect())?;
    let provenance = Provenance { tree_id: tree_id(extended_tree), seed };
    Ok(replay(&ext_view, model, extended_tree.labels().to_vec(), log, Some(provenance)))
}

/// Replay only the segments of `extended` that are shared with `base_tree`,
/// giving the data the base tree would carry under the same events.
pub fn project_sites(
    extended: &SiteMatrix,
    extended_tree: &Tree,
    base_tree: &Tree,
    model: &MutationModel,
) -> Result<SiteMatrix> {
    let log = extended.event_log().ok_or(Error::MissingEventLog)?;
    let nest = nesting(base_tree, extended_tree)?;
    let base_view = RootedView::from_tree(base_tree);
    let n = base_tree.n_leaves();
    let k = log.n_sites();
    let mut events = Vec::with_capacity(k * base_view.branch_count());
    for site in 0..k {
        let mut per_branch = vec![Vec::new(); base_view.branch_count()];
        for v in 0..base_view.node_count() {
            let Some(b) = base_view.branch_id(v) else { continue };
            per_branch[b] = match nest {
                Nesting::Kingman { .. } if v >= n => log.events(site, v + 2).to_vec(),
                Nesting::Kingman { split } if v == split => log.events(site, n + 1).to_vec(),
                Nesting::Kingman { .. } => {
                    let len = base_view.length(v);
                    log.events(site, v).iter().copied().filter(|e| e.offset < len).collect()
                }
                Nesting::Uniform => log.events(site, b).to_vec(),
            };
        }
        events.extend(per_branch);
    }
    let base_log = EventLog::new(base_view.branch_count(), log.root_alleles().to_vec(), events)?;
    let provenance = extended.provenance().map(|p| Provenance { tree_id: tree_id(base_tree), seed: p.seed });
    Ok(replay(&base_view, model, base_tree.labels().to_vec(), base_log, provenance))
}

/// Convenience for ranked trees built with explicit leaf split and duration.
pub fn extend_ranked_sites(
    base: &SiteMatrix,
    tree: &RankedTree,
    leaf: usize,
    new_time: f64,
    model: &MutationModel,
    seed: u64,
) -> Result<(RankedTree, SiteMatrix)> {
    let ext = tree.extend_at(leaf, tree.next_label(), new_time)?;
    let data = extend_sites(base, &Tree::Ranked(tree.clone()), &Tree::Ranked(ext.clone()), model, seed)?;
    Ok((ext, data))
}

/// Same for unrooted trees with an explicit insertion point.
pub fn extend_unrooted_sites(
    base: &SiteMatrix,
    tree: &UnrootedTree,
    edge: usize,
    end: crate::trees::EdgeEnd,
    lengths: (f64, f64),
    model: &MutationModel,
    seed: u64,
) -> Result<(UnrootedTree, SiteMatrix)> {
    let ext = tree.extend_at(edge, end, lengths.0, lengths.1, tree.next_label())?;
    let data = extend_sites(base, &Tree::Unrooted(tree.clone()), &Tree::Unrooted(ext.clone()), model, seed)?;
    Ok((ext, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{extend_kingman, extend_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_leaf(t: f64) -> Tree {
        Tree::Ranked(RankedTree::new(RankedTree::integer_labels(2), vec![(0, 1)], vec![t]).unwrap())
    }

    #[test]
    fn deterministic_given_seed() {
        let m = MutationModel::binary_symmetric(0.5).unwrap();
        let t = two_leaf(1.0);
        let a = simulate_sites(&t, &m, 50, 9).unwrap();
        let b = simulate_sites(&t, &m, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_sites(&t, &m, 50, 10).unwrap();
        assert_ne!(a.row(0), c.row(0));
    }

    #[test]
    fn replaying_the_log_reproduces_leaves() {
        let m = MutationModel::jukes_cantor(0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = RankedTree::new(RankedTree::integer_labels(2), vec![(0, 1)], vec![0.7]).unwrap();
        for _ in 0..3 {
            t = extend_kingman(&t, &mut rng);
        }
        let tree = Tree::Ranked(t);
        let d = simulate_sites(&tree, &m, 30, 4).unwrap();
        let again = replay(
            &RootedView::from_tree(&tree),
            &m,
            tree.labels().to_vec(),
            d.event_log().unwrap().clone(),
            d.provenance().cloned(),
        );
        assert_eq!(again, d);
    }

    #[test]
    fn two_leaf_match_frequency() {
        let mu = 0.3;
        let t = 0.8;
        let m = MutationModel::binary_symmetric(mu).unwrap();
        let k = 100_000;
        let d = simulate_sites(&two_leaf(t), &m, k, 17).unwrap();
        let matches = (0..k).filter(|&s| d.allele(0, s) == d.allele(1, s)).count() as f64 / k as f64;
        let p = (1.0 + (-2.0 * mu * 2.0 * t).exp()) / 2.0;
        let se = (p * (1.0 - p) / k as f64).sqrt();
        assert!((matches - p).abs() < 4.0 * se, "{matches} vs {p}");
    }

    #[test]
    fn extension_projects_back_bitwise() {
        let m = MutationModel::binary_symmetric(0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = RankedTree::new(RankedTree::integer_labels(2), vec![(0, 1)], vec![0.5]).unwrap();
        for _ in 0..2 {
            t = extend_kingman(&t, &mut rng);
        }
        let base = Tree::Ranked(t.clone());
        let data = simulate_sites(&base, &m, 40, 3).unwrap();
        let ext = Tree::Ranked(extend_kingman(&t, &mut rng));
        let extended = extend_sites(&data, &base, &ext, &m, 3).unwrap();
        assert_eq!(project_sites(&extended, &ext, &base, &m).unwrap(), data);

        let u = crate::trees::enumerate::unrooted_topologies(5).swap_remove(7);
        let base = Tree::Unrooted(u.clone());
        let data = simulate_sites(&base, &m, 40, 5).unwrap();
        let ext = Tree::Unrooted(extend_uniform(&u, 1.0, &mut rng).unwrap());
        let extended = extend_sites(&data, &base, &ext, &m, 5).unwrap();
        assert_eq!(project_sites(&extended, &ext, &base, &m).unwrap(), data);
    }

    #[test]
    fn zero_length_split_duplicates_partner() {
        let m = MutationModel::binary_symmetric(2.0).unwrap();
        let t = RankedTree::new(RankedTree::integer_labels(3), vec![(0, 1), (2, 3)], vec![1.0, 1.0]).unwrap();
        let data = simulate_sites(&Tree::Ranked(t.clone()), &m, 200, 8).unwrap();
        let (_, ext) = extend_ranked_sites(&data, &t, 1, 0.0, &m, 8).unwrap();
        assert_eq!(ext.row(3), ext.row(1));
        assert_eq!(ext.row(0), data.row(0));
    }

    #[test]
    fn unrooted_requires_reversible_model() {
        let cyc = MutationModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let u = crate::trees::enumerate::unrooted_topologies(4).remove(0);
        assert!(matches!(simulate_sites(&Tree::Unrooted(u), &cyc, 5, 1), Err(Error::NotReversible)));
        let m = MutationModel::binary_symmetric(1.0).unwrap();
        assert!(simulate_sites(&two_leaf(1.0), &m, 0, 1).is_err());
    }

    #[test]
    fn extension_rejects_unnested_trees() {
        let m = MutationModel::binary_symmetric(1.0).unwrap();
        let base = two_leaf(1.0);
        let data = simulate_sites(&base, &m, 5, 1).unwrap();
        let other = RankedTree::new(RankedTree::integer_labels(3), vec![(0, 1), (2, 3)], vec![2.0, 1.0]).unwrap();
        assert!(extend_sites(&data, &base, &Tree::Ranked(other), &m, 1).is_err());
    }
}
