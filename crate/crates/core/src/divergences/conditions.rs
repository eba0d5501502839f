use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mutation::MutationModel;
use crate::priors::{tail_bounds, KingmanPrior, Prior};
use crate::seed;
use crate::trees::{binom2, Tree};

/// Which corollary's sequences to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PriorKind {
    Kingman,
    Uniform { lambda: f64 },
}

/// Rate constants and the derived sequences `zeta_k^2, eps_k^2, f_k, g_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionConfig {
    pub kind: PriorKind,
    pub n: usize,
    /// Site count; a float so astronomically large `k` stay representable.
    pub k: f64,
    pub c: f64,
    pub beta: f64,
    pub delta: f64,
    pub w: usize,
    pub log_b_n: f64,
}

/// Sequences in log form where they can under- or overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sequences {
    pub zeta2: f64,
    pub eps2: f64,
    pub log_f: f64,
    pub g: f64,
}

impl ConditionConfig {
    /// `beta = 1.5`, `delta = 1`, and `C = n / sqrt(log k_min)` so that
    /// `log k >= n^2 / C^2` holds for every `k >= k_min`.
    pub fn with_defaults(
        kind: PriorKind,
        n: usize,
        k: f64,
        k_min: f64,
        model: &MutationModel,
        log_b_n: f64,
    ) -> Result<Self> {
        if !(k_min > 1.0) {
            return Err(Error::Config(format!("k_min = {k_min} must exceed 1")));
        }
        let cfg = Self { kind, n, k, c: n as f64 / k_min.ln().sqrt(), beta: 1.5, delta: 1.0, w: model.w(), log_b_n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_k(&self, k: f64) -> Result<Self> {
        let cfg = Self { k, ..*self };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) || !(self.c > 0.0) || !(self.delta > 0.0) || !(self.k >= 2.0) {
            return Err(Error::Config("need beta > 1, C > 0, delta > 0 and k >= 2".into()));
        }
        if let PriorKind::Uniform { lambda } = self.kind {
            if !(lambda > 0.0) {
                return Err(Error::Config("lambda must be positive".into()));
            }
        }
        let s = self.sequences();
        if s.zeta2 > s.eps2 {
            return Err(Error::Config(format!("zeta_k > eps_k at k = {} (log k < 1)", self.k)));
        }
        Ok(())
    }

    pub fn sequences(&self) -> Sequences {
        let lk = self.k.ln();
        let (scale, log_f_const, g_div) = match self.kind {
            PriorKind::Kingman => (1.0, -((self.n * (self.n - 1)) as f64).ln(), 1.0),
            PriorKind::Uniform { lambda } => (2.0, -(2.0 * self.n as f64 * lambda).ln(), lambda),
        };
        let zeta2 = scale * self.c * lk.powf(1.5) / self.k;
        let eps2 = scale * self.c * lk.powf(1.5 + self.beta) / self.k;
        let kz = self.k * zeta2;
        Sequences { zeta2, eps2, log_f: log_f_const - (self.c + 4.0) * kz, g: (self.c + 4.0 + self.delta) * kz / g_div }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyCheck {
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub satisfied: bool,
}

/// `(g / (eps^2 f^{nw}))^{m*} exp(-k eps^2)` against
/// `1 / (|T_n| (4 B_n)^{m*})`, both in logs.
pub fn condition_entropy(config: &ConditionConfig, log_topology_count: f64, m_star: usize) -> Result<EntropyCheck> {
    config.validate()?;
    if m_star == 0 || !log_topology_count.is_finite() || log_topology_count < 0.0 {
        return Err(Error::Config("topology count and m* must be positive".into()));
    }
    let s = config.sequences();
    let nw = (config.n * config.w) as f64;
    let m = m_star as f64;
    let log_lhs = m * (s.g.ln() - s.eps2.ln() - nw * s.log_f) - config.k * s.eps2;
    let log_rhs = -log_topology_count - m * ((4.0f64).ln() + config.log_b_n);
    if !log_lhs.is_finite() || !log_rhs.is_finite() {
        return Err(Error::Numeric("entropy condition is not finite".into()));
    }
    Ok(EntropyCheck { log_lhs, log_rhs, satisfied: log_lhs <= log_rhs })
}

/// Union bounds for the two halves of the remaining mass.
///
/// Kingman: every external branch contains `x_{n-1} ~ Exp(binom(n, 2))`, and
/// the long-branch part uses `(n - 1) e^{-g}`. Uniform: a union over the `n`
/// pendant edges and `(2n - 3) e^{-lambda g}`.
fn tail_bounds_for(prior: &Prior, f: f64, g: f64) -> Result<(f64, f64)> {
    match prior {
        Prior::Kingman(p) => {
            let b = tail_bounds(&[binom2(p.n)], f, g)?;
            Ok((b.lower[0], (p.n - 1) as f64 * (-g).exp()))
        }
        Prior::Uniform(p) => {
            let b = tail_bounds(&vec![p.lambda; 2 * p.n - 3], f, g)?;
            Ok((p.n as f64 * b.lower[0], b.upper))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainingMass {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Bound on the short-external-branch part.
    pub lower_tail_bound: f64,
    /// Bound on the long-branch part.
    pub upper_tail_bound: f64,
    pub analytic_bound: f64,
}

/// Prior mass outside the sieve: some external branch at most `f`, or some
/// branch at least `g`.
pub fn condition_remaining_mass(prior: &Prior, f: f64, g: f64, samples: usize, seed: u64) -> Result<RemainingMass> {
    if samples < 1000 {
        return Err(Error::Config(format!("need at least 1000 samples, got {samples}")));
    }
    let (lower, upper) = tail_bounds_for(prior, f, g)?;
    let mut rng = seed::rng_from(&[seed::tag("remaining-mass"), seed]);
    let mut hits = 0usize;
    for _ in 0..samples {
        let map = prior.sample(&mut rng).branch_map();
        if !map.in_lower_set(f) || !map.in_upper_set(g) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(RemainingMass {
        estimate: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        lower_tail_bound: lower,
        upper_tail_bound: upper,
        analytic_bound: lower + upper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorMass {
    /// `Pi(T0)`, one over the number of topologies.
    pub topology_probability: f64,
    /// Monte Carlo `Pi(x in L_f~(T0), ||x - x0|| <= radius | T0)`.
    pub conditional_estimate: f64,
    pub std_error: f64,
    /// Exact mass of an inscribed coordinate box, a lower bound on the above.
    pub box_lower_bound: f64,
    pub f_tilde: f64,
    pub estimate: f64,
}

/// Rates of the exponential coordinates of `x` given the topology.
fn coordinate_rates(prior: &Prior) -> Vec<f64> {
    match prior {
        Prior::Kingman(p) => (1..p.n).map(KingmanPrior::holding_rate).collect(),
        Prior::Uniform(p) => vec![p.lambda; 2 * p.n - 3],
    }
}

/// Coordinates whose lower limit is `f~` inside `L_f~(T0)`.
fn constrained_coordinates(tree0: &Tree) -> Vec<bool> {
    match tree0 {
        Tree::Ranked(t) => {
            let n = t.n_leaves();
            (0..n - 1).map(|i| i == n - 2).collect()
        }
        Tree::Unrooted(t) => t.branch_map().branches().iter().map(|b| b.external).collect(),
    }
}

pub fn condition_prior_mass(
    prior: &Prior,
    tree0: &Tree,
    model: &MutationModel,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<PriorMass> {
    if !(radius > 0.0) {
        return Err(Error::OutOfRange(format!("radius {radius} must be positive")));
    }
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    prior.log_density(tree0)?;
    let f_tilde = tree0.branch_map().tilde_f(model.eta())?;
    let x0 = tree0.parameters().to_vec();
    let m = x0.len();
    let rates = coordinate_rates(prior);
    let log_norm: f64 = rates.iter().map(|r| r.ln()).sum();
    let log_volume =
        (m as f64 / 2.0) * std::f64::consts::PI.ln() - ln_gamma(m as f64 / 2.0 + 1.0) + m as f64 * radius.ln();

    // Importance sampling with points uniform in the ball.
    let mut rng = seed::rng_from(&[seed::tag("prior-mass"), seed]);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut x = vec![0.0; m];
    for _ in 0..samples {
        let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let r = radius * rng.random::<f64>().powf(1.0 / m as f64);
        for i in 0..m {
            x[i] = x0[i] + r * dir[i] / norm;
        }
        let value =
            if x.iter().all(|&v| v > 0.0) && tree0.with_parameters(x.clone())?.branch_map().in_lower_set(f_tilde) {
                (log_norm - rates.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() + log_volume).exp()
            } else {
                0.0
            };
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);

    // Inscribed box of half-width radius / sqrt(m).
    let half = radius / (m as f64).sqrt();
    let constrained = constrained_coordinates(tree0);
    let mut box_mass = 1.0;
    for i in 0..m {
        let mut lo = (x0[i] - half).max(0.0);
        if constrained[i] {
            lo = lo.max(f_tilde);
        }
        let hi = x0[i] + half;
        box_mass *= if hi > lo { (-rates[i] * lo).exp() - (-rates[i] * hi).exp() } else { 0.0 };
    }

    let topology_probability = (-prior.log_topology_count()).exp();
    Ok(PriorMass {
        topology_probability,
        conditional_estimate: mean,
        std_error: (var / samples as f64).sqrt(),
        box_lower_bound: box_mass,
        f_tilde,
        estimate: topology_probability * mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::RankedTree;

    fn config(k: f64) -> ConditionConfig {
        let m = MutationModel::binary_symmetric(0.1).unwrap();
        ConditionConfig::with_defaults(PriorKind::Kingman, 4, k, 1e6, &m, 20.0).unwrap()
    }

    #[test]
    fn sequences_follow_definitions() {
        let c = config(1e8);
        let s = c.sequences();
        let lk = 1e8f64.ln();
        assert!((s.zeta2 - c.c * lk.powf(1.5) / 1e8).abs() < 1e-20);
        assert!((s.g - (c.c + 5.0) * c.c * lk.powf(1.5)).abs() < 1e-9);
        assert!(s.zeta2 <= s.eps2);
    }

    #[test]
    fn entropy_eventually_holds() {
        let huge = condition_entropy(&config(1e300), 18f64.ln(), 3).unwrap();
        assert!(huge.satisfied);
        let small = condition_entropy(&config(1e3), 18f64.ln(), 3).unwrap();
        assert!(!small.satisfied);
        assert!(small.log_lhs.is_finite());
    }

    #[test]
    fn invalid_configs() {
        let m = MutationModel::binary_symmetric(0.1).unwrap();
        assert!(ConditionConfig::with_defaults(PriorKind::Kingman, 4, 2.0, 1e6, &m, 1.0).is_err());
        let mut c = config(1e6);
        c.beta = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kingman_short_external_probability() {
        // x_4 ~ Exp(10) at n = 5; with g huge only the lower tail matters.
        let prior = Prior::kingman(5).unwrap();
        let r = condition_remaining_mass(&prior, 0.01, 1e9, 200_000, 3).unwrap();
        let exact = 1.0 - (-0.1f64).exp();
        assert!((r.estimate - exact).abs() < 4.0 * r.std_error);
        assert!(r.estimate <= r.analytic_bound);
    }

    #[test]
    fn uniform_long_branch_bound() {
        let prior = Prior::uniform(5, 1.0).unwrap();
        let r = condition_remaining_mass(&prior, 1e-12, 20.0, 10_000, 4).unwrap();
        assert!((r.upper_tail_bound - 7.0 * (-20.0f64).exp()).abs() < 1e-20);
        assert!(r.estimate <= r.analytic_bound + 3.0 * r.std_error);
        assert!(condition_remaining_mass(&prior, 0.1, 1.0, 10, 4).is_err());
    }

    #[test]
    fn huge_radius_gives_lower_set_mass() {
        let prior = Prior::kingman(3).unwrap();
        let m = MutationModel::binary_symmetric(0.1).unwrap();
        let t =
            Tree::Ranked(RankedTree::new(RankedTree::integer_labels(3), vec![(0, 1), (2, 3)], vec![1.0, 0.5]).unwrap());
        let r = condition_prior_mass(&prior, &t, &m, 0.1, 20_000, 1).unwrap();
        assert!(r.conditional_estimate >= r.box_lower_bound);
        assert!((r.topology_probability - 1.0 / 3.0).abs() < 1e-15);
    }
}
