//! The replicate grid: nested true trees, coupled prefix-nested data,
//! one chain per cell, and the aggregated support curves.

mod tables;

pub use tables::{crossings_csv, curves_csv, parse_results_csv, results_csv, RESULTS_HEADER};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{posterior_support, run_chain, ChainConfig, ProposalWeights};
use crate::mutation::{extend_sites, simulate_sites, MutationModel, SiteMatrix};
use crate::priors::{nested_sequence, topology_prior_probability, Prior};
use crate::seed;
use crate::stats;
use crate::trees::{CanonicalMode, Tree};

/// A prior family without a fixed leaf count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorFamily {
    Kingman,
    Uniform {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_lambda() -> f64 {
    1.0
}

impl PriorFamily {
    pub fn at(&self, n: usize) -> Result<Prior> {
        match *self {
            PriorFamily::Kingman => Prior::kingman(n),
            PriorFamily::Uniform { lambda } => Prior::uniform(n, lambda),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::Kingman => "kingman",
            PriorFamily::Uniform { .. } => "uniform",
        }
    }

    /// Rooted topologies for the coalescent, unrooted for the uniform prior.
    pub fn support_mode(&self) -> CanonicalMode {
        match self {
            PriorFamily::Kingman => CanonicalMode::RootedUnranked,
            PriorFamily::Uniform { .. } => CanonicalMode::Unrooted,
        }
    }
}

/// Chain settings shared by every cell; the seed is derived per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainTemplate {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    #[serde(default)]
    pub weights: ProposalWeights,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_true")]
    pub adapt: bool,
}

fn default_scale() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

impl Default for ChainTemplate {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            burn_in: 100_000,
            thin: 100,
            weights: ProposalWeights::default(),
            scale: 0.5,
            adapt: true,
        }
    }
}

impl ChainTemplate {
    pub fn config(&self, prior: Prior, seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            weights: self.weights,
            scale: self.scale,
            adapt: self.adapt,
            seed,
            prior,
            prior_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub prior: PriorFamily,
    pub n_values: Vec<usize>,
    pub mu_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub chain: ChainTemplate,
    /// Leaf count of the first tree of the nested sequence.
    #[serde(default = "default_n_start")]
    pub n_start: usize,
}

fn default_n_start() -> usize {
    4
}

impl GridSpec {
    /// The desk grid: n in {4, 6}, mu in {0.05, 0.2}, k in {1, ..., 1e4},
    /// 20 replicates.
    pub fn desk(prior: PriorFamily, master_seed: u64) -> Self {
        Self {
            prior,
            n_values: vec![4, 6],
            mu_values: vec![0.05, 0.2],
            k_values: vec![1, 10, 100, 1000, 10_000],
            replicates: 20,
            master_seed,
            chain: ChainTemplate::default(),
            n_start: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.mu_values.is_empty() || self.k_values.is_empty() || self.replicates == 0 {
            return Err(Error::Config("grid lists must be nonempty and replicates positive".into()));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) || self.k_values[0] == 0 {
            return Err(Error::Config("site counts must be positive and strictly increasing".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) || self.n_values[0] < self.n_start {
            return Err(Error::Config(format!(
                "leaf counts must be strictly increasing and at least {}",
                self.n_start
            )));
        }
        if self.mu_values.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config("mutation rates must be positive".into()));
        }
        self.prior.at(self.n_start)?;
        self.chain.config(self.prior.at(self.n_values[0])?, 0).validate()
    }

    pub fn cell_count(&self) -> usize {
        self.n_values.len() * self.mu_values.len() * self.k_values.len() * self.replicates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub prior: String,
    pub n: usize,
    pub mu: f64,
    pub k: usize,
    pub replicate: usize,
    pub posterior_support: f64,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Set when the chain failed twice; numeric fields are then NaN.
    pub error: Option<String>,
}

/// Seed of the nested tree sequence.
pub fn tree_seed(spec: &GridSpec) -> u64 {
    seed::derive(&[spec.master_seed, seed::tag("trees"), seed::tag(spec.prior.name())])
}

/// Seed of the raw data for one `(mu, replicate)`; shared by every `n` so
/// the data sets are coupled across leaf counts.
pub fn data_seed(spec: &GridSpec, mu: f64, replicate: usize) -> u64 {
    seed::derive(&[spec.master_seed, seed::tag("data"), seed::tag(spec.prior.name()), mu.to_bits(), replicate as u64])
}

/// Seed of the chain for one cell: a hash of (master seed, prior, n, mu,
/// replicate, k).
pub fn chain_seed(spec: &GridSpec, n: usize, mu: f64, replicate: usize, k: usize) -> u64 {
    seed::derive(&[
        spec.master_seed,
        seed::tag("chain-cell"),
        seed::tag(spec.prior.name()),
        n as u64,
        mu.to_bits(),
        replicate as u64,
        k as u64,
    ])
}

/// The nested sequence from `n_start` up to the largest requested `n`.
pub fn true_trees(spec: &GridSpec) -> Result<Vec<Tree>> {
    let n_max = *spec.n_values.last().expect("validated");
    let mut rng = seed::rng_from(&[tree_seed(spec)]);
    nested_sequence(&spec.prior.at(spec.n_start)?, spec.n_start, n_max, &mut rng)
}

/// Raw data at `k_max` sites on every tree of the sequence for one
/// `(mu, replicate)`, simulated at `n_start` and extended leaf by leaf.
pub fn coupled_data(
    spec: &GridSpec,
    trees: &[Tree],
    model: &MutationModel,
    mu: f64,
    replicate: usize,
) -> Result<Vec<SiteMatrix>> {
    let k_max = *spec.k_values.last().expect("validated");
    let s = data_seed(spec, mu, replicate);
    let mut out = vec![simulate_sites(&trees[0], model, k_max, s)?];
    for w in trees.windows(2) {
        let next = extend_sites(out.last().expect("nonempty"), &w[0], &w[1], model, s)?;
        out.push(next);
    }
    Ok(out)
}

struct Job<'a> {
    n: usize,
    mu: f64,
    k: usize,
    replicate: usize,
    truth: &'a Tree,
    data: &'a SiteMatrix,
    model: &'a MutationModel,
}

fn run_cell(spec: &GridSpec, job: &Job) -> ResultRow {
    let start = Instant::now();
    let base_seed = chain_seed(spec, job.n, job.mu, job.replicate, job.k);
    let attempt = |s: u64| -> Result<(f64, f64, f64)> {
        let prior = spec.prior.at(job.n)?;
        let data = job.data.prefix(job.k)?;
        let trace = run_chain(&spec.chain.config(prior, s), job.model, Some(&data))?;
        let support = posterior_support(&trace, job.truth, spec.prior.support_mode())?;
        let ll: Vec<f64> = trace.samples.iter().map(|x| x.log_likelihood).collect();
        Ok((support, trace.acceptance_rate(), stats::ess(&ll)))
    };
    let mut used = base_seed;
    let outcome = attempt(base_seed).or_else(|_| {
        used = seed::derive(&[base_seed, seed::tag("retry")]);
        attempt(used)
    });
    let (support, acc, ess, error) = match outcome {
        Ok((s, a, e)) => (s, a, e, None),
        Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
    };
    ResultRow {
        prior: spec.prior.name().to_string(),
        n: job.n,
        mu: job.mu,
        k: job.k,
        replicate: job.replicate,
        posterior_support: support,
        acceptance_rate: acc,
        ess,
        seed: used,
        wall_time_s: start.elapsed().as_secs_f64(),
        error,
    }
}

/// Run every cell. Rows come back in (n, mu, k, replicate) order whatever
/// the scheduling. `workers = 0` uses all cores.
pub fn run_grid(spec: &GridSpec, workers: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let trees = true_trees(spec)?;
    let index_of = |n: usize| n - spec.n_start;
    let mut models = Vec::with_capacity(spec.mu_values.len());
    for &mu in &spec.mu_values {
        models.push(MutationModel::binary_symmetric(mu)?);
    }
    // data[mu][replicate][n index]
    let mut data = Vec::with_capacity(spec.mu_values.len());
    for (mi, &mu) in spec.mu_values.iter().enumerate() {
        let reps =
            (0..spec.replicates).map(|r| coupled_data(spec, &trees, &models[mi], mu, r)).collect::<Result<Vec<_>>>()?;
        data.push(reps);
    }
    let mut jobs = Vec::with_capacity(spec.cell_count());
    for &n in &spec.n_values {
        for (mi, &mu) in spec.mu_values.iter().enumerate() {
            for &k in &spec.k_values {
                for r in 0..spec.replicates {
                    jobs.push(Job {
                        n,
                        mu,
                        k,
                        replicate: r,
                        truth: &trees[index_of(n)],
                        data: &data[mi][r][index_of(n)],
                        model: &models[mi],
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|j| run_cell(spec, j)).collect()))
}

/// Prior probability of the true topology at each `n`, the k = 1 reference.
pub fn prior_baselines(spec: &GridSpec) -> Result<Vec<(usize, f64)>> {
    let trees = true_trees(spec)?;
    spec.n_values
        .iter()
        .map(|&n| {
            let t = &trees[n - spec.n_start];
            Ok((n, topology_prior_probability(&spec.prior.at(n)?, t, spec.prior.support_mode())?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub prior: String,
    pub n: usize,
    pub mu: f64,
    pub points: Vec<CurvePoint>,
}

/// Mean support per `(prior, n, mu)` over `k`, with the inter-replicate
/// spread. Failed cells are skipped.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<Curve>> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows".into()));
    }
    let mut keys: Vec<(String, usize, u64)> = rows.iter().map(|r| (r.prior.clone(), r.n, r.mu.to_bits())).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(f64::from_bits(a.2).total_cmp(&f64::from_bits(b.2))));
    keys.dedup();
    let mut curves = Vec::with_capacity(keys.len());
    for (prior, n, mu_bits) in keys {
        let cell: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.prior == prior && r.n == n && r.mu.to_bits() == mu_bits && r.error.is_none())
            .collect();
        let mut ks: Vec<usize> = cell.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let points = ks
            .into_iter()
            .map(|k| {
                let v: Vec<f64> = cell.iter().filter(|r| r.k == k).map(|r| r.posterior_support).collect();
                let (mean, _) = stats::mean_se(&v);
                let sd = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                CurvePoint {
                    k,
                    mean,
                    sd,
                    q10: stats::quantile(&v, 0.1),
                    q50: stats::quantile(&v, 0.5),
                    q90: stats::quantile(&v, 0.9),
                    replicates: v.len(),
                }
            })
            .collect();
        curves.push(Curve { prior, n, mu: f64::from_bits(mu_bits), points });
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub prior: String,
    pub n: usize,
    pub mu: f64,
    pub level: f64,
    /// Largest `k` before the first exceedance; `None` when the first `k`
    /// already exceeds the level.
    pub k_below: Option<usize>,
    /// First `k` whose mean exceeds the level; `None` if never.
    pub k_above: Option<usize>,
}

impl Crossing {
    pub fn crossed(&self) -> bool {
        self.k_above.is_some()
    }
}

pub fn threshold_crossing(curve: &Curve, level: f64) -> Crossing {
    let first = curve.points.iter().position(|p| p.mean > level);
    Crossing {
        prior: curve.prior.clone(),
        n: curve.n,
        mu: curve.mu,
        level,
        k_below: first.and_then(|i| i.checked_sub(1)).map(|i| curve.points[i].k),
        k_above: first.map(|i| curve.points[i].k),
    }
}

#[cfg(test)]
mod tests;
