use serde::Serialize;

use crate::error::{Error, Result};
use crate::trees::Tree;

/// Shape summary for one tree of a nested sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeRow {
    pub n: usize,
    pub l1_norm: f64,
    /// Kingman: the holding time nearest the leaves, `x_{n-1}`. Uniform: the
    /// shortest branch.
    pub min_parameter: f64,
    /// `n^-4` for Kingman, `n^-2` for uniform.
    pub threshold: f64,
    pub below_threshold: bool,
    /// `lambda * ||x||_1 / n` (uniform only).
    pub per_leaf: Option<f64>,
    /// `lambda * ||x||_1 / (2n - 3)` (uniform only).
    pub per_branch: Option<f64>,
}

/// Empirical counterparts of the two shape lemmas. `lambda` is required for
/// uniform sequences.
pub fn shape_diagnostics(sequence: &[Tree], lambda: Option<f64>) -> Result<Vec<ShapeRow>> {
    sequence
        .iter()
        .map(|tree| {
            let n = tree.n_leaves();
            let x = tree.parameters();
            let l1: f64 = x.iter().sum();
            Ok(match tree {
                Tree::Ranked(_) => {
                    let threshold = (n as f64).powi(-4);
                    let last = x[n - 2];
                    ShapeRow {
                        n,
                        l1_norm: l1,
                        min_parameter: last,
                        threshold,
                        below_threshold: last < threshold,
                        per_leaf: None,
                        per_branch: None,
                    }
                }
                Tree::Unrooted(_) => {
                    let lambda = lambda.ok_or_else(|| Error::Config("lambda required for uniform trees".into()))?;
                    let threshold = (n as f64).powi(-2);
                    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
                    ShapeRow {
                        n,
                        l1_norm: l1,
                        min_parameter: min,
                        threshold,
                        below_threshold: min < threshold,
                        per_leaf: Some(lambda * l1 / n as f64),
                        per_branch: Some(lambda * l1 / (2 * n - 3) as f64),
                    }
                }
            })
        })
        .collect()
}

/// Lemma-style tail bounds for independent `X_i ~ Exp(lambda_i)` next to
/// their exact values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBounds {
    /// `lambda_i f (1 + lambda_i f / 2)` bounding `P(X_i < f)`.
    pub lower: Vec<f64>,
    /// `1 - exp(-lambda_i f)`.
    pub lower_exact: Vec<f64>,
    /// `m exp(-min_i lambda_i g)` bounding `P(max_i X_i > g)`.
    pub upper: f64,
    /// `1 - prod_i (1 - exp(-lambda_i g))`.
    pub upper_exact: f64,
}

impl TailBounds {
    pub fn dominates(&self) -> bool {
        self.lower.iter().zip(&self.lower_exact).all(|(b, e)| b >= e) && self.upper >= self.upper_exact
    }
}

pub fn tail_bounds(lambdas: &[f64], f: f64, g: f64) -> Result<TailBounds> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) || !(f > 0.0) || !(g > 0.0) {
        return Err(Error::OutOfRange("rates, f and g must all be positive".into()));
    }
    let lower = lambdas.iter().map(|l| l * f * (1.0 + l * f / 2.0)).collect();
    let lower_exact = lambdas.iter().map(|l| -(-l * f).exp_m1()).collect();
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = lambdas.len() as f64 * (-min * g).exp();
    // 1 - prod(1 - e_i) computed as -expm1(sum log1p(-e_i)).
    let log_all_below: f64 = lambdas.iter().map(|l| (-(-l * g).exp()).ln_1p()).sum();
    let upper_exact = -log_all_below.exp_m1();
    Ok(TailBounds { lower, lower_exact, upper, upper_exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        let b = tail_bounds(&[1.0], 0.1, 1.0).unwrap();
        assert!((b.lower[0] - 0.105).abs() < 1e-15);
        assert!((b.lower_exact[0] - 0.095_162_581_964_040_4).abs() < 1e-15);
        let b = tail_bounds(&[1.0, 2.0, 3.0], 1.0, 5.0).unwrap();
        assert!((b.upper - 3.0 * (-5.0f64).exp()).abs() < 1e-18);
        let direct = 1.0 - (1.0 - (-5.0f64).exp()) * (1.0 - (-10.0f64).exp()) * (1.0 - (-15.0f64).exp());
        assert!((b.upper_exact - direct).abs() < 1e-15);
        assert!(b.dominates());
    }

    #[test]
    fn small_f_goes_to_zero() {
        let b = tail_bounds(&[2.0], 1e-12, 1.0).unwrap();
        assert!(b.lower[0] < 3e-12 && b.lower_exact[0] < 3e-12);
        assert!(tail_bounds(&[1.0], 0.0, 1.0).is_err());
        assert!(tail_bounds(&[-1.0], 1.0, 1.0).is_err());
    }
}
