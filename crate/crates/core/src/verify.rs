//! Numeric verification suites: oracle equivalence, inequality checks and
//! sampler fidelity. Each suite returns a JSON-serializable report.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergences::{
    condition_entropy, condition_prior_mass, condition_remaining_mass, hellinger_sq, kl, leaf_distribution,
    lemma1_bound, psi_sup, v0, ConditionConfig, PriorKind,
};
use crate::error::{Error, Result};
use crate::likelihood::{
    all_patterns, brute_force_site_likelihood, root_invariance_check, site_likelihood, RootedView,
};
use crate::mutation::MutationModel;
use crate::priors::{tail_bounds, KingmanPrior, Prior};
use crate::seed;
use crate::stats;
use crate::trees::{canonical_topology, ranked_topology_count, unrooted_topology_count, CanonicalMode, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Pruning,
    Lemma1,
    Lemma2,
    Conditions,
    Priors,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pruning" => Ok(Suite::Pruning),
            "lemma1" => Ok(Suite::Lemma1),
            "lemma2" => Ok(Suite::Lemma2),
            "conditions" => Ok(Suite::Conditions),
            "priors" => Ok(Suite::Priors),
            other => Err(Error::Config(format!("unknown suite {other:?}"))),
        }
    }
}

/// Suite settings; omitted fields take per-suite defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub instances: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub instance: String,
    pub computed: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self { suite, passed: checks.iter().all(|c| c.pass), checks }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn check(name: &str, instance: String, computed: f64, bound: f64, pass: bool) -> Check {
    Check { name: name.to_string(), instance, computed, bound, pass }
}

pub fn run_suite(suite: Suite, config: &VerifyConfig) -> Result<Report> {
    match suite {
        Suite::Pruning => pruning_suite(config),
        Suite::Lemma1 => lemma1_suite(config),
        Suite::Lemma2 => lemma2_suite(config),
        Suite::Conditions => conditions_suite(config),
        Suite::Priors => priors_suite(config),
    }
}

/// A random reversible model on `h` alleles: symmetric exchangeabilities and
/// a random stationary distribution, used as the root distribution.
pub fn random_reversible_model<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Result<MutationModel> {
    let mut pi: Vec<f64> = (0..h).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    let mut ex = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in i + 1..h {
            let v = rng.random_range(0.1..1.5);
            ex[i][j] = v;
            ex[j][i] = v;
        }
    }
    let mut q = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in 0..h {
            if i != j {
                q[i][j] = ex[i][j] * pi[j];
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    MutationModel::new((0..h).map(|i| format!("s{i}")).collect(), q, pi)
}

/// A random model that is generally not reversible, with an arbitrary root
/// distribution.
pub fn random_general_model<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Result<MutationModel> {
    let mut q = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in 0..h {
            if i != j {
                q[i][j] = rng.random_range(0.05..1.2);
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    let mut r: Vec<f64> = (0..h).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = r.iter().sum();
    r.iter_mut().for_each(|p| *p /= s);
    MutationModel::new((0..h).map(|i| format!("s{i}")).collect(), q, r)
}

fn pruning_suite(config: &VerifyConfig) -> Result<Report> {
    let instances = config.instances.unwrap_or(200);
    let mut rng = seed::rng_from(&[seed::tag("verify-pruning"), config.seed]);
    let mut checks = Vec::new();
    for i in 0..instances {
        let h = if rng.random::<bool>() { 2 } else { 4 };
        let unrooted = rng.random::<bool>();
        let n = if unrooted { rng.random_range(4..=6) } else { rng.random_range(2..=6) };
        let model = if unrooted || rng.random::<bool>() {
            random_reversible_model(h, &mut rng)?
        } else {
            random_general_model(h, &mut rng)?
        };
        let prior = if unrooted { Prior::uniform(n, rng.random_range(0.5..3.0))? } else { Prior::kingman(n)? };
        let tree = prior.sample(&mut rng);
        let view = RootedView::from_tree(&tree);
        let pattern: Vec<u8> = (0..n).map(|_| rng.random_range(0..h) as u8).collect();
        let fast = site_likelihood(&view, &model, &pattern)?;
        let slow = brute_force_site_likelihood(&view, &model, &pattern)?;
        let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
        let desc = format!("#{i} {} n={n} h={h} pattern={pattern:?}", tree.kind_name());
        checks.push(check("pruning-vs-brute-force", desc.clone(), rel, 1e-12, rel <= 1e-12));
        let total: f64 = all_patterns(n, h).map(|p| site_likelihood(&view, &model, &p)).sum::<Result<f64>>()?;
        checks.push(check(
            "pattern-table-sums-to-one",
            desc.clone(),
            (total - 1.0).abs(),
            1e-10,
            (total - 1.0).abs() <= 1e-10,
        ));
        if let Tree::Unrooted(t) = &tree {
            let dev = root_invariance_check(t, &model, &pattern)?;
            checks.push(check("root-invariance", desc, dev, 1e-12, dev < 1e-12));
        }
    }
    Ok(Report::new(Suite::Pruning, checks))
}

fn perturb<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter().map(|v| v * (sigma * rng.sample::<f64, _>(StandardNormal)).exp()).collect()
}

fn lemma1_suite(config: &VerifyConfig) -> Result<Report> {
    let instances = config.instances.unwrap_or(1000);
    let mut rng = seed::rng_from(&[seed::tag("verify-lemma1"), config.seed]);
    let mut checks = Vec::new();
    for i in 0..instances {
        let unrooted = rng.random_range(0..3) == 0;
        let n = if unrooted { 4 } else { rng.random_range(2..=4) };
        let prior = if unrooted { Prior::uniform(n, 1.0)? } else { Prior::kingman(n)? };
        let mu = rng.random_range(0.05..2.0);
        let model = match rng.random_range(0..3) {
            0 => MutationModel::binary_symmetric(mu)?,
            1 => MutationModel::jukes_cantor(mu)?,
            _ => random_reversible_model(3, &mut rng)?,
        };
        let tree0 = prior.sample(&mut rng);
        let sigma = 10f64.powf(rng.random_range(-3.0..0.0));
        let tree = tree0.with_parameters(perturb(tree0.parameters(), sigma, &mut rng))?;
        let cap = 1.0 / (2.0 * model.eta());
        let ceiling = cap.min(tree0.branch_map().min_external_length()?).min(tree.branch_map().min_external_length()?);
        let f = ceiling * rng.random_range(0.05..0.95);
        let bound = lemma1_bound(&tree0, &model, psi_sup(&tree0), f)?;
        let p0 = leaf_distribution(&tree0, &model)?;
        let p = leaf_distribution(&tree, &model)?;
        let dist = tree0.parameters().iter().zip(tree.parameters()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let k = kl(&p0, &p)?;
        let v = v0(&p0, &p)?;
        let kl_bound = bound.kl_coefficient * dist;
        let v0_bound = bound.v0_coefficient * dist * dist;
        let desc = format!("#{i} {} n={n} h={} f={f:.3e} dist={dist:.3e}", tree0.kind_name(), model.n_alleles());
        checks.push(check("kl-bound", desc.clone(), k, kl_bound, k <= kl_bound));
        checks.push(check("v0-bound", desc, v, v0_bound, v <= v0_bound));
    }
    Ok(Report::new(Suite::Lemma1, checks))
}

fn lemma2_suite(_config: &VerifyConfig) -> Result<Report> {
    let mut checks = Vec::new();
    for a in 0..20 {
        let lambda = 10f64.powf(-2.0 + 4.0 * a as f64 / 19.0);
        for b in 0..20 {
            let f = 10f64.powf(-4.0 + 4.0 * b as f64 / 19.0);
            let t = tail_bounds(&[lambda], f, 1.0)?;
            let exact = -(-lambda * f).exp_m1();
            let desc = format!("lambda={lambda:.4e} f={f:.4e}");
            checks.push(check(
                "lower-tail-dominates",
                desc.clone(),
                t.lower_exact[0],
                t.lower[0],
                t.lower[0] >= t.lower_exact[0],
            ));
            let err = (t.lower_exact[0] - exact).abs();
            checks.push(check(
                "lower-tail-exact",
                desc,
                err,
                1e-12 * exact.max(1e-300),
                err <= 1e-12 * exact.max(1e-300) + 1e-300,
            ));
        }
    }
    for c in 0..20 {
        let m = 1 + c % 7;
        let lambdas: Vec<f64> = (0..m).map(|i| 0.25 * (1 + (i * 7 + c) % 11) as f64).collect();
        let g = 0.2 * (1 + c) as f64;
        let t = tail_bounds(&lambdas, 1e-3, g)?;
        let exact = 1.0 - lambdas.iter().map(|l| 1.0 - (-l * g).exp()).product::<f64>();
        let desc = format!("lambdas={lambdas:?} g={g}");
        checks.push(check("upper-tail-dominates", desc.clone(), t.upper_exact, t.upper, t.upper >= t.upper_exact));
        let err = (t.upper_exact - exact).abs();
        checks.push(check("upper-tail-exact", desc, err, 1e-12, err <= 1e-12));
    }
    Ok(Report::new(Suite::Lemma2, checks))
}

/// `Pi(ball(x0, r) and L_f(T0) | T0)` for a three-leaf Kingman tree by
/// one-dimensional quadrature over `x_1` with the `x_2` integral in closed
/// form. Coordinates are `(x_1, x_2)` with rates `(1, 3)`; the external
/// constraint is `x_2 > f`.
pub fn kingman3_ball_mass(x0: [f64; 2], radius: f64, f: f64, nodes: usize) -> f64 {
    let (l1, l2) = (1.0, 3.0);
    // x_1 = x0_1 + r sin(theta) removes the square-root endpoint behaviour.
    let h = std::f64::consts::PI / nodes as f64;
    let integrand = |theta: f64| {
        let x1 = x0[0] + radius * theta.sin();
        if x1 <= 0.0 {
            return 0.0;
        }
        let half = radius * theta.cos();
        let lo = (x0[1] - half).max(0.0).max(f);
        let hi = x0[1] + half;
        if hi <= lo {
            return 0.0;
        }
        l1 * (-l1 * x1).exp() * ((-l2 * lo).exp() - (-l2 * hi).exp()) * radius * theta.cos()
    };
    // Composite Simpson on [-pi/2, pi/2].
    let mut sum = integrand(-std::f64::consts::FRAC_PI_2) + integrand(std::f64::consts::FRAC_PI_2);
    for i in 1..nodes {
        let t = -std::f64::consts::FRAC_PI_2 + i as f64 * h;
        sum += integrand(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn conditions_suite(config: &VerifyConfig) -> Result<Report> {
    let samples = config.samples.unwrap_or(20_000);
    let mut checks = Vec::new();
    let model = MutationModel::binary_symmetric(0.1)?;

    // Entropy condition along a k grid with C fixed.
    let n = 5;
    let prior = Prior::kingman(n)?;
    let tree0 = prior.sample(&mut seed::rng_from(&[seed::tag("verify-conditions"), config.seed]));
    let log_b = crate::divergences::log_bn(n, &model, psi_sup(&tree0))?;
    let base = ConditionConfig::with_defaults(PriorKind::Kingman, n, 1e8, 1e8, &model, log_b)?;
    let mut prev = f64::INFINITY;
    for e in (8..=64).step_by(4) {
        let k = 10f64.powi(e);
        let r = condition_entropy(&base.with_k(k)?, prior.log_topology_count(), n - 1)?;
        let ok = r.log_lhs.is_finite() && r.log_rhs.is_finite() && r.log_lhs < prev;
        checks.push(check(
            "entropy-finite-decreasing",
            format!("k=1e{e} satisfied={}", r.satisfied),
            r.log_lhs,
            prev,
            ok,
        ));
        prev = r.log_lhs;
    }

    // Remaining mass against the union bounds.
    for (pi, p) in [Prior::kingman(5)?, Prior::uniform(5, 1.0)?].into_iter().enumerate() {
        for (j, (f, g)) in [(1e-3, 2.0), (5e-3, 3.0), (1e-2, 4.0), (2e-2, 5.0), (5e-2, 6.0)].into_iter().enumerate() {
            let r = condition_remaining_mass(&p, f, g, samples, config.seed ^ (pi * 10 + j) as u64)?;
            let limit = r.analytic_bound + 3.0 * r.std_error;
            checks.push(check(
                "remaining-mass-below-bound",
                format!("{} f={f} g={g}", p.name()),
                r.estimate,
                limit,
                r.estimate <= limit,
            ));
        }
    }

    // Prior mass against quadrature at n = 3.
    let p3 = Prior::kingman(3)?;
    let t3 = Tree::Ranked(crate::trees::RankedTree::new(
        crate::trees::RankedTree::integer_labels(3),
        vec![(0, 1), (2, 3)],
        vec![1.0, 0.5],
    )?);
    let mass = condition_prior_mass(&p3, &t3, &model, 0.1, samples.max(100_000), config.seed)?;
    let quad = mass.topology_probability * kingman3_ball_mass([1.0, 0.5], 0.1, mass.f_tilde, 4000);
    let rel = (mass.estimate - quad).abs() / quad;
    checks.push(check("prior-mass-vs-quadrature", "kingman n=3 x0=(1,0.5) r=0.1".into(), rel, 0.02, rel < 0.02));
    Ok(Report::new(Suite::Conditions, checks))
}

fn topology_counts(
    prior: &Prior,
    mode: CanonicalMode,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<HashMap<String, u64>> {
    let mut counts = HashMap::new();
    for _ in 0..samples {
        *counts.entry(canonical_topology(&prior.sample(rng), mode)?.0).or_default() += 1;
    }
    Ok(counts)
}

fn priors_suite(config: &VerifyConfig) -> Result<Report> {
    let samples = config.samples.unwrap_or(100_000);
    let mut rng = seed::rng_from(&[seed::tag("verify-priors"), config.seed]);
    let mut checks = Vec::new();
    let cases = [
        (Prior::kingman(3)?, CanonicalMode::Ranked, ranked_topology_count(3)),
        (Prior::kingman(4)?, CanonicalMode::Ranked, ranked_topology_count(4)),
        (Prior::uniform(4, 1.0)?, CanonicalMode::Unrooted, unrooted_topology_count(4)),
        (Prior::uniform(5, 1.0)?, CanonicalMode::Unrooted, unrooted_topology_count(5)),
    ];
    for (prior, mode, count) in cases {
        let counts = topology_counts(&prior, mode, samples, &mut rng)?;
        let cells = count.round() as usize;
        let mut v: Vec<u64> = counts.values().copied().collect();
        let desc = format!("{} n={} cells={cells} seen={}", prior.name(), prior.n(), v.len());
        if v.len() > cells {
            checks.push(check("topology-uniform", desc, v.len() as f64, cells as f64, false));
            continue;
        }
        v.resize(cells, 0);
        let t = stats::chi_square_uniform(&v)?;
        checks.push(check("topology-uniform", desc, t.p_value, 0.001, t.p_value > 0.001));
    }
    // Parameter marginals.
    let ks_samples = samples.min(20_000);
    for prior in [Prior::kingman(4)?, Prior::uniform(4, 1.5)?] {
        let draws: Vec<Tree> = (0..ks_samples).map(|_| prior.sample(&mut rng)).collect();
        for i in 0..prior.dimension() {
            let rate = match prior {
                Prior::Kingman(_) => KingmanPrior::holding_rate(i + 1),
                Prior::Uniform(p) => p.lambda,
            };
            let xs: Vec<f64> = draws.iter().map(|t| t.parameters()[i]).collect();
            let t = stats::ks_test(&xs, |x| 1.0 - (-rate * x.max(0.0)).exp())?;
            checks.push(check(
                "parameter-marginal-ks",
                format!("{} n=4 coordinate {}", prior.name(), i + 1),
                t.p_value,
                0.001,
                t.p_value > 0.001,
            ));
        }
    }
    // Mean of ||x||_1: 2 (1 - 1/n), tending to 2.
    for (n, draws) in [(4usize, samples), (400, samples.min(10_000))] {
        let prior = Prior::kingman(n)?;
        let xs: Vec<f64> = (0..draws).map(|_| prior.sample(&mut rng).parameters().iter().sum()).collect();
        let (mean, se) = stats::mean_se(&xs);
        let exact = 2.0 * (1.0 - 1.0 / n as f64);
        checks.push(check(
            "kingman-height-mean",
            format!("n={n} exact={exact}"),
            mean,
            exact,
            (mean - exact).abs() < 3.0 * se,
        ));
        if n == 400 {
            checks.push(check("kingman-height-near-two", format!("n={n}"), mean, 2.0, (mean - 2.0).abs() < 3.0 * se));
        }
    }
    Ok(Report::new(Suite::Priors, checks))
}

/// Exact identity and inequality checks for the divergences on random
/// pairs; used by the conditions tests and the acceptance suite.
pub fn divergence_identities(pairs: usize, seed_value: u64) -> Result<Vec<Check>> {
    let mut rng = seed::rng_from(&[seed::tag("verify-divergences"), seed_value]);
    let mut checks = Vec::new();
    for i in 0..pairs {
        let n = rng.random_range(2..=4);
        let prior = Prior::kingman(n)?;
        let model = MutationModel::binary_symmetric(rng.random_range(0.05..1.0))?;
        let t0 = prior.sample(&mut rng);
        let t1 = prior.sample(&mut rng);
        let p0 = leaf_distribution(&t0, &model)?;
        let p1 = leaf_distribution(&t1, &model)?;
        let h2 = hellinger_sq(&p0, &p1)?;
        let k = kl(&p0, &p1)?;
        checks.push(check("hellinger-sq-below-kl", format!("#{i} n={n}"), h2, k, h2 <= k));
    }
    Ok(checks)
}
