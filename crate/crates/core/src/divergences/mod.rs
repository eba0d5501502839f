//! Exact divergences between leaf-pattern distributions, the Lemma-1 style
//! constants, and numeric evaluators for the contraction conditions.

mod conditions;
mod lemma1;

pub use conditions::{
    condition_entropy, condition_prior_mass, condition_remaining_mass, ConditionConfig, EntropyCheck, PriorKind,
    PriorMass, RemainingMass, Sequences,
};
pub use lemma1::{lemma1_bound, log_bn, min_diagonal_transition, psi_sup, Lemma1Bound};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::{all_patterns, site_likelihood, RootedView};
use crate::mutation::MutationModel;
use crate::trees::Tree;

const TABLE_LIMIT: f64 = 1e7;

/// Probabilities of all `|H|^n` leaf patterns, indexed as in
/// [`all_patterns`](crate::likelihood::all_patterns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafDistribution {
    pub n: usize,
    pub h: usize,
    pub probs: Vec<f64>,
}

impl LeafDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

pub fn leaf_distribution(tree: &Tree, model: &MutationModel) -> Result<LeafDistribution> {
    leaf_distribution_of_view(&RootedView::from_tree(tree), model)
}

pub fn leaf_distribution_of_view(view: &RootedView, model: &MutationModel) -> Result<LeafDistribution> {
    let n = view.n_leaves();
    let h = model.n_alleles();
    let size = (h as f64).powi(n as i32);
    if size > TABLE_LIMIT {
        return Err(Error::EnumerationGuard { terms: size, limit: TABLE_LIMIT });
    }
    let probs = all_patterns(n, h).map(|p| site_likelihood(view, model, &p)).collect::<Result<Vec<_>>>()?;
    let dist = LeafDistribution { n, h, probs };
    let total = dist.total();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Numeric(format!("pattern probabilities sum to {total}")));
    }
    Ok(dist)
}

fn check_pair(p0: &LeafDistribution, p: &LeafDistribution) -> Result<()> {
    if p0.probs.len() != p.probs.len() {
        return Err(Error::OutOfRange("distributions have different supports".into()));
    }
    if p0.probs.iter().zip(&p.probs).any(|(&a, &b)| a > 0.0 && b <= 0.0) {
        return Err(Error::OutOfRange("p vanishes where p0 is positive".into()));
    }
    Ok(())
}

fn log_ratios<'a>(p0: &'a LeafDistribution, p: &'a LeafDistribution) -> impl Iterator<Item = (f64, f64)> + 'a {
    p0.probs.iter().zip(&p.probs).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| (a, a.ln() - b.ln()))
}

/// `sum p0 log(p0 / p)`.
pub fn kl(p0: &LeafDistribution, p: &LeafDistribution) -> Result<f64> {
    check_pair(p0, p)?;
    Ok(log_ratios(p0, p).map(|(a, l)| a * l).sum::<f64>().max(0.0))
}

/// Centred second variation `sum p0 (log(p0 / p) - KL)^2`.
pub fn v0(p0: &LeafDistribution, p: &LeafDistribution) -> Result<f64> {
    let k = kl(p0, p)?;
    Ok(log_ratios(p0, p).map(|(a, l)| a * (l - k) * (l - k)).sum())
}

/// `(1/2) sum (sqrt p0 - sqrt p)^2`.
pub fn hellinger_sq(p0: &LeafDistribution, p: &LeafDistribution) -> Result<f64> {
    if p0.probs.len() != p.probs.len() {
        return Err(Error::OutOfRange("distributions have different supports".into()));
    }
    Ok(0.5 * p0.probs.iter().zip(&p.probs).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>())
}

pub fn hellinger(p0: &LeafDistribution, p: &LeafDistribution) -> Result<f64> {
    hellinger_sq(p0, p).map(f64::sqrt)
}
