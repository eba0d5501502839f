use serde::Serialize;

use crate::error::{Error, Result};
use crate::mutation::MutationModel;
use crate::trees::Tree;

/// `sup ||d psi||_inf`: `n - 1` for ranked trees, 1 for unrooted trees.
pub fn psi_sup(tree: &Tree) -> f64 {
    match tree {
        Tree::Ranked(t) => (t.n_leaves() - 1) as f64,
        Tree::Unrooted(_) => 1.0,
    }
}

/// `min over alleles a and t >= 0 of exp(Qt)_aa`.
///
/// A log-spaced grid on `[1e-6, 1e4] / gamma` locates the minimum, a golden
/// section search refines it, and the `t -> infinity` limit (the smallest
/// stationary probability) is included.
pub fn min_diagonal_transition(model: &MutationModel) -> Result<f64> {
    let h = model.n_alleles();
    let gamma = model.gamma();
    let mut buf = vec![0.0; h * h];
    let mut diag_min = |t: f64| -> Result<f64> {
        model.fill_transition(t, &mut buf)?;
        Ok((0..h).map(|a| buf[a * h + a]).fold(f64::INFINITY, f64::min))
    };
    let points = 801;
    let (lo, hi) = ((1e-6f64).ln(), (1e4f64).ln());
    let ts: Vec<f64> = (0..points).map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp() / gamma).collect();
    let mut values = Vec::with_capacity(points);
    for &t in &ts {
        values.push(diag_min(t)?);
    }
    let (best, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("grid");
    let mut a = ts[best.saturating_sub(1)];
    let mut b = ts[(best + 1).min(points - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (diag_min(c)?, diag_min(d)?);
    while (b - a) > 1e-12 * b.max(1e-300) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = diag_min(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = diag_min(d)?;
        }
    }
    let stationary = model.stationary().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(values[best].min(fc).min(fd).min(stationary))
}

/// `log B_n` from the explicit product form.
pub fn log_bn(n: usize, model: &MutationModel, psi_sup: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("n = {n} is too small")));
    }
    let w = model.w();
    let log_w_fact: f64 = (1..=w).map(|i| (i as f64).ln()).sum();
    let min_r = model.root_distribution().iter().copied().fold(f64::INFINITY, f64::min);
    let min_diag = min_diagonal_transition(model)?;
    Ok((4.0 * model.gamma()).ln() + log_w_fact - min_r.ln()
        + psi_sup.ln()
        + ((n - 1) as f64).ln()
        + (n - 1) as f64 * (model.n_alleles() as f64).ln()
        - (n as f64 - 2.0) * min_diag.ln()
        - (n * w) as f64 * model.eta().ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Bound {
    pub log_b_n: f64,
    pub b_n: f64,
    /// `B_n f^{-nw}`, multiplying `||x - x0||_2` in the KL bound.
    pub kl_coefficient: f64,
    /// Its square, multiplying `||x - x0||_2^2` in the V0 bound.
    pub v0_coefficient: f64,
    pub log_kl_coefficient: f64,
}

pub fn lemma1_bound(tree0: &Tree, model: &MutationModel, psi_sup: f64, f: f64) -> Result<Lemma1Bound> {
    let cap = 1.0 / (2.0 * model.eta());
    if !(f > 0.0 && f < cap) {
        return Err(Error::OutOfRange(format!("f = {f} must lie in (0, {cap})")));
    }
    if !(psi_sup > 0.0 && psi_sup.is_finite()) {
        return Err(Error::OutOfRange(format!("psi_sup = {psi_sup} must be positive and finite")));
    }
    let n = tree0.n_leaves();
    let log_b_n = log_bn(n, model, psi_sup)?;
    let log_kl = log_b_n - (n * model.w()) as f64 * f.ln();
    Ok(Lemma1Bound {
        log_b_n,
        b_n: log_b_n.exp(),
        kl_coefficient: log_kl.exp(),
        v0_coefficient: (2.0 * log_kl).exp(),
        log_kl_coefficient: log_kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::RankedTree;

    #[test]
    fn binary_min_diagonal_is_one_half() {
        let m = MutationModel::binary_symmetric(0.4).unwrap();
        assert!((min_diagonal_transition(&m).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cyclic_model_dips_below_stationary() {
        // The 3-cycle overshoots: exp(Qt)_aa has an interior minimum below 1/3.
        let m = MutationModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        let v = min_diagonal_transition(&m).unwrap();
        assert!(v < 1.0 / 3.0 - 1e-3);
        // Brute-force fine scan as an oracle.
        let mut best = f64::INFINITY;
        for i in 1..200_000 {
            let p = m.transition_matrix(i as f64 * 1e-4).unwrap();
            best = best.min(p[(0, 0)]);
        }
        assert!((v - best).abs() < 1e-8);
    }

    #[test]
    fn explicit_formula_binary() {
        let mu = 0.1;
        let m = MutationModel::binary_symmetric(mu).unwrap();
        let t =
            Tree::Ranked(RankedTree::new(RankedTree::integer_labels(3), vec![(0, 1), (2, 3)], vec![1.0, 1.0]).unwrap());
        let b = lemma1_bound(&t, &m, psi_sup(&t), 0.5).unwrap();
        // 4 gamma w!/min r * psi (n-1) |H|^(n-1) / (0.5^(n-2) eta^(n w)).
        let want = 4.0 * mu * 1.0 / 0.5 * 2.0 * 2.0 * 4.0 / (0.5 * mu.powi(3));
        assert!((b.b_n - want).abs() < 1e-9 * want);
        assert!((b.kl_coefficient - want * 0.5f64.powi(-3)).abs() < 1e-9 * b.kl_coefficient);
        assert!(lemma1_bound(&t, &m, 2.0, 5.0).is_err());
        assert!(lemma1_bound(&t, &m, 2.0, 0.0).is_err());
    }
}
