use super::RootedView;
use crate::error::{Error, Result};
use crate::mutation::{MutationModel, SiteMatrix};
use crate::trees::UnrootedTree;

const RESCALE_BELOW: f64 = 1e-256;
const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Alleles at the leaves for one site, in leaf order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeafPattern(pub Vec<u8>);

impl LeafPattern {
    pub fn from_symbols(model: &MutationModel, symbols: &[&str]) -> Result<Self> {
        symbols.iter().map(|s| model.allele_index(s)).collect::<Result<_>>().map(Self)
    }
}

impl AsRef<[u8]> for LeafPattern {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

fn check_pattern(view: &RootedView, model: &MutationModel, pattern: &[u8]) -> Result<()> {
    if pattern.len() != view.n_leaves() {
        return Err(Error::OutOfRange(format!("pattern has {} alleles for {} leaves", pattern.len(), view.n_leaves())));
    }
    if let Some(&bad) = pattern.iter().find(|&&a| a as usize >= model.n_alleles()) {
        return Err(Error::UnknownAllele(format!("index {bad}")));
    }
    Ok(())
}

/// Transition matrices for every node's parent branch, computed once per
/// distinct length.
fn branch_matrices(view: &RootedView, model: &MutationModel, out: &mut Vec<f64>) -> Result<()> {
    let h = model.n_alleles();
    let nodes = view.node_count();
    out.resize(nodes * h * h, 0.0);
    let mut seen: Vec<(u64, usize)> = Vec::with_capacity(nodes);
    for v in 0..nodes {
        if view.parent(v).is_none() {
            continue;
        }
        let bits = view.length(v).to_bits();
        if let Some(&(_, src)) = seen.iter().find(|(b, _)| *b == bits) {
            out.copy_within(src * h * h..(src + 1) * h * h, v * h * h);
        } else {
            model.fill_transition(view.length(v), &mut out[v * h * h..(v + 1) * h * h])?;
            seen.push((bits, v));
        }
    }
    Ok(())
}

/// Reusable pruning workspace over a compressed data set.
#[derive(Debug, Clone)]
pub struct Pruner {
    n_leaves: usize,
    h: usize,
    root_dist: Vec<f64>,
    /// Distinct columns, flattened.
    patterns: Vec<u8>,
    weights: Vec<f64>,
    matrices: Vec<f64>,
    partial: Vec<f64>,
}

impl Pruner {
    pub fn new(model: &MutationModel, data: &SiteMatrix) -> Result<Self> {
        let compressed = data.patterns();
        let mut patterns = Vec::with_capacity(compressed.len() * data.n_leaves());
        let mut weights = Vec::with_capacity(compressed.len());
        for (col, count) in compressed {
            if let Some(&bad) = col.iter().find(|&&a| a as usize >= model.n_alleles()) {
                return Err(Error::UnknownAllele(format!("index {bad}")));
            }
            patterns.extend(col);
            weights.push(count as f64);
        }
        Ok(Self::from_compressed(model, data.n_leaves(), patterns, weights))
    }

    fn from_compressed(model: &MutationModel, n_leaves: usize, patterns: Vec<u8>, weights: Vec<f64>) -> Self {
        Self {
            n_leaves,
            h: model.n_alleles(),
            root_dist: model.root_distribution().to_vec(),
            patterns,
            weights,
            matrices: Vec::new(),
            partial: Vec::new(),
        }
    }

    pub fn n_patterns(&self) -> usize {
        self.weights.len()
    }

    /// Weighted sum of per-pattern log likelihoods; 0 for empty data.
    pub fn log_likelihood(&mut self, view: &RootedView, model: &MutationModel) -> Result<f64> {
        if view.n_leaves() != self.n_leaves {
            return Err(Error::Config(format!("data has {} leaves, tree has {}", self.n_leaves, view.n_leaves())));
        }
        if self.weights.is_empty() {
            return Ok(0.0);
        }
        let mut matrices = std::mem::take(&mut self.matrices);
        branch_matrices(view, model, &mut matrices)?;
        self.matrices = matrices;
        let mut total = 0.0;
        for p in 0..self.weights.len() {
            total += self.weights[p] * self.pattern_log_likelihood(view, p);
        }
        Ok(total)
    }

    fn pattern_log_likelihood(&mut self, view: &RootedView, p: usize) -> f64 {
        let h = self.h;
        let n = self.n_leaves;
        let pattern = &self.patterns[p * n..(p + 1) * n];
        self.partial.resize(view.node_count() * h, 0.0);
        let mut log_scale = 0.0;
        let mut acc = [0.0f64; 64];
        for v in view.postorder() {
            if v < n {
                continue;
            }
            acc[..h].iter_mut().for_each(|x| *x = 1.0);
            for &c in view.children(v) {
                let m = &self.matrices[c * h * h..(c + 1) * h * h];
                if c < n {
                    let b = pattern[c] as usize;
                    for a in 0..h {
                        acc[a] *= m[a * h + b];
                    }
                } else {
                    let child = &self.partial[c * h..(c + 1) * h];
                    for a in 0..h {
                        let row = &m[a * h..(a + 1) * h];
                        let s: f64 = row.iter().zip(child).map(|(x, y)| x * y).sum();
                        acc[a] *= s;
                    }
                }
            }
            let max = acc[..h].iter().copied().fold(0.0, f64::max);
            if max > 0.0 && max < RESCALE_BELOW {
                acc[..h].iter_mut().for_each(|x| *x /= max);
                log_scale += max.ln();
            }
            self.partial[v * h..(v + 1) * h].copy_from_slice(&acc[..h]);
        }
        let root = view.root();
        let l: f64 = (0..h).map(|a| self.root_dist[a] * self.partial[root * h + a]).sum();
        l.ln() + log_scale
    }
}

/// Probability of one leaf pattern by Felsenstein pruning.
pub fn site_likelihood(view: &RootedView, model: &MutationModel, pattern: &[u8]) -> Result<f64> {
    Ok(site_log_likelihood(view, model, pattern)?.exp())
}

pub fn site_log_likelihood(view: &RootedView, model: &MutationModel, pattern: &[u8]) -> Result<f64> {
    check_pattern(view, model, pattern)?;
    let mut pruner = Pruner::from_compressed(model, view.n_leaves(), pattern.to_vec(), vec![1.0]);
    pruner.log_likelihood(view, model)
}

/// The defining sum over all internal allele assignments.
pub fn brute_force_site_likelihood(view: &RootedView, model: &MutationModel, pattern: &[u8]) -> Result<f64> {
    check_pattern(view, model, pattern)?;
    let h = model.n_alleles();
    let n = view.n_leaves();
    let internal: Vec<usize> = view.internal_nodes().collect();
    let terms = (h as f64).powi(internal.len() as i32);
    if terms > BRUTE_FORCE_LIMIT {
        return Err(Error::EnumerationGuard { terms, limit: BRUTE_FORCE_LIMIT });
    }
    let mut matrices = Vec::new();
    branch_matrices(view, model, &mut matrices)?;
    let mut state = vec![0usize; view.node_count()];
    for (leaf, &a) in pattern.iter().enumerate() {
        state[leaf] = a as usize;
    }
    let mut digits = vec![0usize; internal.len()];
    let mut total = 0.0;
    loop {
        for (i, &v) in internal.iter().enumerate() {
            state[v] = digits[i];
        }
        let mut term = model.root_distribution()[state[view.root()]];
        for v in 0..view.node_count() {
            if let Some(p) = view.parent(v) {
                term *= matrices[v * h * h + state[p] * h + state[v]];
            }
        }
        total += term;
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == digits.len() {
                debug_assert!(n > 0);
                return Ok(total);
            }
            digits[i] += 1;
            if digits[i] < h {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Multisite log likelihood with pattern compression.
pub fn log_likelihood(view: &RootedView, model: &MutationModel, data: &SiteMatrix) -> Result<f64> {
    Pruner::new(model, data)?.log_likelihood(view, model)
}

/// Largest pairwise difference of the site likelihood across all rootings at
/// internal nodes.
pub fn root_invariance_check(tree: &UnrootedTree, model: &MutationModel, pattern: &[u8]) -> Result<f64> {
    if !model.is_reversible() {
        return Err(Error::NotReversible);
    }
    let n = tree.n_leaves();
    let values = (n..tree.node_count())
        .map(|root| site_likelihood(&RootedView::from_unrooted(tree, root)?, model, pattern))
        .collect::<Result<Vec<f64>>>()?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Every pattern in `H^n`, in lexicographic order with leaf 0 most significant.
pub fn all_patterns(n: usize, h: usize) -> impl Iterator<Item = Vec<u8>> {
    let total = h.pow(n as u32);
    (0..total).map(move |mut idx| {
        let mut p = vec![0u8; n];
        for slot in p.iter_mut().rev() {
            *slot = (idx % h) as u8;
            idx /= h;
        }
        p
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::RankedTree;

    fn cherry(l1: f64, l2: f64) -> RootedView {
        RootedView::from_parents(2, vec![Some(2), Some(2), None], vec![l1, l2, 0.0]).unwrap()
    }

    #[test]
    fn two_leaf_value() {
        let m = MutationModel::binary_symmetric(0.1).unwrap();
        let v = cherry(1.0, 1.0);
        let p = site_likelihood(&v, &m, &[0, 0]).unwrap();
        let want = (1.0 + (-0.4f64).exp()) / 4.0;
        assert!((p - want).abs() < 1e-15);
        assert!((p - 0.417580).abs() < 1e-6);
        assert!((brute_force_site_likelihood(&v, &m, &[0, 0]).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zero_lengths() {
        let m = MutationModel::jukes_cantor(1.0).unwrap();
        let v = RootedView::from_parents(3, vec![Some(3), Some(4), Some(4), None, Some(3)], vec![0.0; 5]).unwrap();
        assert!((site_likelihood(&v, &m, &[2, 2, 2]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(site_likelihood(&v, &m, &[2, 1, 2]).unwrap(), 0.0);
        assert_eq!(brute_force_site_likelihood(&v, &m, &[2, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn normalization() {
        let m = MutationModel::jukes_cantor(0.3).unwrap();
        let t =
            RankedTree::new(RankedTree::integer_labels(4), vec![(0, 1), (2, 4), (3, 5)], vec![0.4, 0.2, 0.3]).unwrap();
        let v = RootedView::from_ranked(&t);
        let total: f64 = all_patterns(4, 4).map(|p| site_likelihood(&v, &m, &p).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_columns_double() {
        let m = MutationModel::binary_symmetric(0.5).unwrap();
        let v = cherry(0.3, 0.9);
        let data = SiteMatrix::from_rows(vec!["a".into(), "b".into()], vec![vec![0, 0], vec![1, 1]], 2).unwrap();
        let one = site_log_likelihood(&v, &m, &[0, 1]).unwrap();
        assert!((log_likelihood(&v, &m, &data).unwrap() - 2.0 * one).abs() < 1e-14);
        let empty = SiteMatrix::from_rows(vec!["a".into(), "b".into()], vec![vec![], vec![]], 2).unwrap();
        assert_eq!(log_likelihood(&v, &m, &empty).unwrap(), 0.0);
    }

    #[test]
    fn deep_trees_rescale() {
        // 0.25^600 is below the smallest positive double.
        let m = MutationModel::jukes_cantor(1.0).unwrap();
        let n = 600;
        let mut merges = vec![(0, 1)];
        for j in 1..n - 1 {
            merges.push((j + 1, n + j - 1));
        }
        let t = RankedTree::new(RankedTree::integer_labels(n), merges, vec![5.0; n - 1]).unwrap();
        let v = RootedView::from_ranked(&t);
        let pattern: Vec<u8> = (0..n).map(|i| (i % 4) as u8).collect();
        let ll = site_log_likelihood(&v, &m, &pattern).unwrap();
        assert!(ll.is_finite());
        assert!((ll - n as f64 * 0.25f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn pattern_checks() {
        let m = MutationModel::binary_symmetric(0.5).unwrap();
        let v = cherry(1.0, 1.0);
        assert!(site_likelihood(&v, &m, &[0]).is_err());
        assert!(matches!(site_likelihood(&v, &m, &[0, 2]), Err(Error::UnknownAllele(_))));
        assert_eq!(LeafPattern::from_symbols(&m, &["1", "0"]).unwrap().0, vec![1, 0]);
    }

    #[test]
    fn brute_force_guard() {
        let m = MutationModel::jukes_cantor(1.0).unwrap();
        let n = 14;
        let merges: Vec<(usize, usize)> =
            std::iter::once((0, 1)).chain((1..n - 1).map(|j| (j + 1, n + j - 1))).collect();
        let t = RankedTree::new(RankedTree::integer_labels(n), merges, vec![1.0; n - 1]).unwrap();
        let v = RootedView::from_ranked(&t);
        let r = brute_force_site_likelihood(&v, &m, &vec![0; n]);
        assert!(matches!(r, Err(Error::EnumerationGuard { .. })));
    }
}
