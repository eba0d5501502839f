//! Metropolis-Hastings sampling over topologies and branch lengths.

mod proposals;

pub use proposals::{
    propose, random_nni, ranked_neighbors, repick_choices, repick_pair, swap_adjacent, Proposal, ProposalKind,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::to_newick;
use crate::likelihood::{Pruner, RootedView};
use crate::mutation::{MutationModel, SiteMatrix};
use crate::priors::Prior;
use crate::seed;
use crate::stats;
use crate::trees::{canonical_topology, CanonicalMode, Tree};

/// Relative proposal frequencies. Kinds that do not apply to the prior's
/// tree kind are dropped and the rest renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalWeights {
    pub branch_scale: f64,
    pub all_scale: f64,
    /// NNI for unrooted trees, ranked-neighbor for ranked trees.
    pub topology: f64,
    /// Kingman only.
    pub node_age: f64,
}

impl Default for ProposalWeights {
    fn default() -> Self {
        Self { branch_scale: 0.4, all_scale: 0.1, topology: 0.3, node_age: 0.2 }
    }
}

impl ProposalWeights {
    fn table(&self, tree: &Tree) -> Vec<(ProposalKind, f64)> {
        let topo = match tree {
            Tree::Ranked(_) => ProposalKind::RankedNeighbor,
            Tree::Unrooted(_) => ProposalKind::Nni,
        };
        [
            (ProposalKind::BranchScale, self.branch_scale),
            (ProposalKind::AllScale, self.all_scale),
            (topo, self.topology),
            (ProposalKind::NodeAge, self.node_age),
        ]
        .into_iter()
        .filter(|&(k, w)| w > 0.0 && k.applies_to(tree))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    #[serde(default)]
    pub weights: ProposalWeights,
    /// Initial half-width `s` of the log-scale proposals.
    pub scale: f64,
    /// Tune `s` during burn-in; it is frozen afterwards.
    pub adapt: bool,
    pub seed: u64,
    pub prior: Prior,
    /// Target the prior alone (likelihood fixed at 1).
    #[serde(default)]
    pub prior_only: bool,
}

impl ChainConfig {
    /// Desk-scale defaults: 2e5 iterations, the first half discarded, 1000
    /// retained samples.
    pub fn new(prior: Prior, seed: u64) -> Self {
        Self {
            iterations: 200_000,
            burn_in: 100_000,
            thin: 100,
            weights: ProposalWeights::default(),
            scale: 0.5,
            adapt: true,
            seed,
            prior,
            prior_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn-in must be shorter than the chain".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        let w = self.weights;
        let all = [w.branch_scale, w.all_scale, w.topology, w.node_age];
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || all.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("proposal weights must be nonnegative and not all zero".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config("proposal scale must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub iteration: u64,
    pub tree: Tree,
    pub log_likelihood: f64,
    pub log_prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KindStats {
    pub kind: ProposalKind,
    pub proposed: u64,
    pub accepted: u64,
}

impl KindStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub samples: Vec<Sample>,
    /// Counts over the whole run, burn-in included.
    pub acceptance: Vec<KindStats>,
    /// Log-likelihood at every iteration.
    pub log_likelihood_series: Vec<f64>,
    pub final_scale: f64,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> f64 {
        let p: u64 = self.acceptance.iter().map(|k| k.proposed).sum();
        let a: u64 = self.acceptance.iter().map(|k| k.accepted).sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

struct State {
    tree: Tree,
    log_prior: f64,
    log_likelihood: f64,
}

fn evaluate(tree: &Tree, pruner: &mut Option<Pruner>, model: &MutationModel) -> Result<f64> {
    match pruner {
        None => Ok(0.0),
        Some(p) => {
            let ll = p.log_likelihood(&RootedView::from_tree(tree), model)?;
            if ll.is_nan() || ll == f64::INFINITY {
                return Err(Error::Numeric(format!("log likelihood {ll}")));
            }
            Ok(ll)
        }
    }
}

/// Run one chain. `data` is required unless the config is prior-only; its
/// labels must be the prior's leaf set.
pub fn run_chain(config: &ChainConfig, model: &MutationModel, data: Option<&SiteMatrix>) -> Result<ChainTrace> {
    config.validate()?;
    let prior = &config.prior;
    let mut rng = seed::rng_from(&[seed::tag("chain"), config.seed]);
    let mut tree = prior.sample(&mut rng);
    let mut pruner = match (config.prior_only, data) {
        (true, _) => None,
        (false, None) => return Err(Error::Config("data required unless the chain is prior-only".into())),
        (false, Some(d)) => {
            if d.n_leaves() != prior.n() {
                return Err(Error::Config(format!("data has {} leaves, prior has n = {}", d.n_leaves(), prior.n())));
            }
            tree = match &tree {
                Tree::Ranked(t) => Tree::Ranked(t.with_labels(d.labels().to_vec())?),
                Tree::Unrooted(t) => Tree::Unrooted(t.with_labels(d.labels().to_vec())?),
            };
            Some(Pruner::new(model, d)?)
        }
    };
    let table = config.weights.table(&tree);
    if table.is_empty() {
        return Err(Error::Config("no applicable proposal has positive weight".into()));
    }
    let total_weight: f64 = table.iter().map(|(_, w)| w).sum();

    let log_prior = prior.log_density(&tree)?;
    let log_likelihood = evaluate(&tree, &mut pruner, model)?;
    let mut state = State { tree, log_prior, log_likelihood };

    let mut stats: Vec<KindStats> =
        table.iter().map(|&(kind, _)| KindStats { kind, proposed: 0, accepted: 0 }).collect();
    let mut samples = Vec::with_capacity(config.retained() as usize);
    let mut series = Vec::with_capacity(config.iterations as usize);
    let mut scale = config.scale;
    let (mut window_tries, mut window_accepts, mut batch) = (0u32, 0u32, 0u32);

    for it in 1..=config.iterations {
        let mut r = rng.random::<f64>() * total_weight;
        let mut slot = table.len() - 1;
        for (i, (_, w)) in table.iter().enumerate() {
            if r < *w {
                slot = i;
                break;
            }
            r -= w;
        }
        let kind = table[slot].0;
        stats[slot].proposed += 1;
        let mut accepted = false;
        if let Some(p) = propose(&state.tree, kind, scale, &mut rng)? {
            let lp = prior.log_density(&p.tree)?;
            let ll = evaluate(&p.tree, &mut pruner, model)?;
            let log_alpha = if p.gibbs {
                ll - state.log_likelihood
            } else {
                ll - state.log_likelihood + lp - state.log_prior + p.log_hastings
            };
            let u = rng.random::<f64>();
            if log_alpha >= 0.0 || u.ln() < log_alpha {
                state = State { tree: p.tree, log_prior: lp, log_likelihood: ll };
                accepted = true;
                stats[slot].accepted += 1;
            }
        }
        if config.adapt && it <= config.burn_in && matches!(kind, ProposalKind::BranchScale | ProposalKind::AllScale) {
            window_tries += 1;
            window_accepts += accepted as u32;
            if window_tries == 100 {
                batch += 1;
                let rate = window_accepts as f64 / window_tries as f64;
                let step = (1.0 / (batch as f64).sqrt()).min(0.5);
                scale = (scale.ln() + step * (rate - 0.3)).exp().clamp(0.01, 5.0);
                window_tries = 0;
                window_accepts = 0;
            }
        }
        series.push(state.log_likelihood);
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            samples.push(Sample {
                iteration: it,
                tree: state.tree.clone(),
                log_likelihood: state.log_likelihood,
                log_prior: state.log_prior,
            });
        }
    }
    Ok(ChainTrace { samples, acceptance: stats, log_likelihood_series: series, final_scale: scale })
}

/// Fraction of retained samples whose topology matches `truth` under `mode`.
pub fn posterior_support(trace: &ChainTrace, truth: &Tree, mode: CanonicalMode) -> Result<f64> {
    if trace.samples.is_empty() {
        return Err(Error::Config("trace has no retained samples".into()));
    }
    let key = canonical_topology(truth, mode)?;
    let mut hits = 0usize;
    for s in &trace.samples {
        if canonical_topology(&s.tree, mode)? == key {
            hits += 1;
        }
    }
    Ok(hits as f64 / trace.samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub acceptance: Vec<(String, f64)>,
    pub overall_acceptance: f64,
    pub proposals: u64,
    pub retained: usize,
    pub ess_log_likelihood: f64,
    pub mean_log_likelihood: f64,
}

pub fn diagnostics(trace: &ChainTrace) -> Result<Diagnostics> {
    if trace.samples.is_empty() {
        return Err(Error::Config("trace has no retained samples".into()));
    }
    let ll: Vec<f64> = trace.samples.iter().map(|s| s.log_likelihood).collect();
    Ok(Diagnostics {
        acceptance: trace.acceptance.iter().map(|k| (k.kind.name().to_string(), k.rate())).collect(),
        overall_acceptance: trace.acceptance_rate(),
        proposals: trace.acceptance.iter().map(|k| k.proposed).sum(),
        retained: ll.len(),
        ess_log_likelihood: stats::ess(&ll),
        mean_log_likelihood: ll.iter().sum::<f64>() / ll.len() as f64,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Trace table: `iteration,log_likelihood,log_prior,topology_key`.
pub fn trace_csv(trace: &ChainTrace, mode: CanonicalMode) -> Result<String> {
    let mut out = String::from("iteration,log_likelihood,log_prior,topology_key\n");
    for s in &trace.samples {
        let key = canonical_topology(&s.tree, mode)?;
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{}\n",
            s.iteration,
            s.log_likelihood,
            s.log_prior,
            csv_field(&key.0)
        ));
    }
    Ok(out)
}

/// One `iteration<TAB>newick` line per retained sample.
pub fn trace_newick(trace: &ChainTrace) -> String {
    trace.samples.iter().map(|s| format!("{}\t{}\n", s.iteration, to_newick(&s.tree))).collect()
}
