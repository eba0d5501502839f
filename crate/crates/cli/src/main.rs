use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use phylocons::experiments::{self, GridSpec};
use phylocons::io;
use phylocons::mcmc::{self, ChainConfig, ProposalWeights};
use phylocons::mutation::{simulate_sites, MutationModel};
use phylocons::priors::{nested_sequence, Prior};
use phylocons::trees::{CanonicalMode, Tree};
use phylocons::verify::{self, Suite, VerifyConfig};
use phylocons::{seed, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "phylocons", version, about = "Bayesian phylogenetics under Kingman and uniform tree priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a nested sequence of trees from a prior.
    SimulateTrees(SimulateTreesArgs),
    /// Simulate site data on a tree.
    SimulateData(SimulateDataArgs),
    /// Run an MCMC chain on a site matrix.
    Infer(InferArgs),
    /// Run a numeric verification suite and print its JSON report.
    Verify(VerifyArgs),
    /// Run an experiment grid.
    Grid(GridArgs),
    /// Aggregate a results table into curves and crossings.
    Report(ReportArgs),
    /// Re-run the command recorded in a manifest into a new directory.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PriorArg {
    Kingman,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    /// Two alleles "0" and "1" with symmetric rate mu.
    Binary,
    /// Four alleles A, C, G, T with total rate mu out of each.
    Jc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Pruning,
    Lemma1,
    Lemma2,
    Conditions,
    Priors,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SimulateTreesArgs {
    #[arg(long, value_enum)]
    prior: PriorArg,
    #[arg(long)]
    n_min: usize,
    #[arg(long)]
    n_max: usize,
    /// Branch-length rate of the uniform prior.
    #[arg(long)]
    lambda: Option<f64>,
    /// Master seed.
    #[arg(long, env = "PHYLO_SEED")]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SimulateDataArgs {
    /// Tree file: a JSON sidecar or Newick.
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    mu: f64,
    /// Sites per replicate.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, value_enum, default_value = "binary")]
    model: ModelArg,
    /// Master seed.
    #[arg(long, env = "PHYLO_SEED")]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Site matrix file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    tree_prior: PriorArg,
    /// Branch-length rate of the uniform prior.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: f64,
    #[arg(long, value_enum, default_value = "binary")]
    model: ModelArg,
    #[arg(long, default_value_t = 200_000)]
    chain_iters: u64,
    #[arg(long, default_value_t = 100_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 100)]
    thin: u64,
    /// Initial scale of the multiplicative branch moves.
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    /// Keep the proposal scale fixed during burn-in.
    #[arg(long)]
    no_adapt: bool,
    /// Ignore the data and sample from the prior.
    #[arg(long)]
    prior_only: bool,
    /// True tree (JSON sidecar) for computing posterior support.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Master seed.
    #[arg(long, env = "PHYLO_SEED")]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    /// JSON file with seed, instances and samples overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// GridSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// results.csv from a grid run.
    #[arg(long)]
    results: PathBuf,
    /// Support level for the crossings table.
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    subcommand: String,
    /// Arguments after the program name, with the seed made explicit.
    args: Vec<String>,
    config: Value,
    master_seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started_unix_s: f64,
    finished_unix_s: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Output bookkeeping for one subcommand run.
struct Run {
    dir: PathBuf,
    subcommand: &'static str,
    args: Vec<String>,
    config: Value,
    master_seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: f64,
}

impl Run {
    fn start(
        out: &OutArgs,
        subcommand: &'static str,
        args: &[String],
        master_seed: Option<u64>,
    ) -> anyhow::Result<Self> {
        prepare_dir(&out.out, out.force)?;
        let mut args = args.to_vec();
        if let Some(s) = master_seed {
            if !args.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
                args.extend(["--seed".to_string(), s.to_string()]);
            }
        }
        Ok(Self {
            dir: out.out.clone(),
            subcommand,
            args,
            config: Value::Null,
            master_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: now(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        io::write_atomic(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.to_string(),
            args: self.args,
            config: self.config,
            master_seed: self.master_seed,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_s: self.started,
            finished_unix_s: now(),
        };
        io::write_atomic(&self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }
}

fn prepare_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?.next().is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            ))
            .into());
        }
    } else {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn build_prior(kind: PriorArg, n: usize, lambda: Option<f64>) -> anyhow::Result<Prior> {
    Ok(match kind {
        PriorArg::Kingman => {
            if lambda.is_some() {
                bail!(Error::Config("--lambda applies only to the uniform prior".into()));
            }
            Prior::kingman(n)?
        }
        PriorArg::Uniform => {
            Prior::uniform(n, lambda.ok_or_else(|| Error::Config("lambda required for the uniform prior".into()))?)?
        }
    })
}

fn build_model(kind: ModelArg, mu: f64) -> anyhow::Result<MutationModel> {
    Ok(match kind {
        ModelArg::Binary => MutationModel::binary_symmetric(mu)?,
        ModelArg::Jc => MutationModel::jukes_cantor(mu)?,
    })
}

/// Load a tree from a JSON sidecar, or from Newick: a root with three
/// children reads as unrooted, anything else as ranked.
fn load_tree(path: &Path) -> anyhow::Result<Tree> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        return Ok(io::tree_from_json(&text)?);
    }
    let node = io::parse_newick(&text)?;
    Ok(if node.children.len() == 3 {
        Tree::Unrooted(io::unrooted_from_newick(&text, None)?)
    } else {
        Tree::Ranked(io::ranked_from_newick(&text, None)?)
    })
}

fn simulate_trees(a: &SimulateTreesArgs, argv: &[String]) -> anyhow::Result<()> {
    let prior = build_prior(a.prior, a.n_min, a.lambda)?;
    if a.n_max < a.n_min {
        bail!(Error::Config("--n-max must be at least --n-min".into()));
    }
    let mut run = Run::start(&a.out, "simulate-trees", argv, Some(a.seed))?;
    run.config = json!({ "prior": prior, "n_min": a.n_min, "n_max": a.n_max });
    let mut rng = seed::rng_from(&[seed::tag("simulate-trees"), a.seed]);
    let trees = nested_sequence(&prior, a.n_min, a.n_max, &mut rng)?;
    let mut named = Vec::with_capacity(trees.len());
    for t in &trees {
        let name = format!("tree_n{}", t.n_leaves());
        run.write(&format!("{name}.nwk"), format!("{}\n", io::to_newick(t)).as_bytes())?;
        run.write(&format!("{name}.json"), io::tree_to_json(t)?.as_bytes())?;
        named.push((name, t.clone()));
    }
    run.write("trees.nex", io::write_nexus_trees(&named)?.as_bytes())?;
    run.finish()
}

fn simulate_data(a: &SimulateDataArgs, argv: &[String]) -> anyhow::Result<()> {
    let tree = load_tree(&a.tree)?;
    let model = build_model(a.model, a.mu)?;
    if a.replicates == 0 {
        bail!(Error::Config("--replicates must be positive".into()));
    }
    let mut run = Run::start(&a.out, "simulate-data", argv, Some(a.seed))?;
    run.inputs.push(a.tree.clone());
    run.config = json!({ "model": model.spec(), "k": a.k, "replicates": a.replicates, "tree": io::TreeRecord::from_tree(&tree) });
    for r in 0..a.replicates {
        let s = seed::derive(&[a.seed, seed::tag("replicate"), r as u64]);
        let data = simulate_sites(&tree, &model, a.k, s)?;
        run.write(&format!("data_r{r}.txt"), io::write_matrix(&data, model.alleles())?.as_bytes())?;
        run.write(&format!("data_r{r}.nex"), io::write_nexus_characters(&data, model.alleles())?.as_bytes())?;
        if let Some(log) = data.event_log() {
            run.write(&format!("data_r{r}.events"), &io::encode_event_log(log))?;
        }
    }
    run.finish()
}

fn infer(a: &InferArgs, argv: &[String]) -> anyhow::Result<()> {
    let model = build_model(a.model, a.mu)?;
    let (data, _) = io::read_matrix(&read(&a.data)?, Some(model.alleles()))?;
    let prior = build_prior(a.tree_prior, data.n_leaves(), a.lambda)?;
    let truth = a.truth.as_deref().map(load_tree).transpose()?;
    let config = ChainConfig {
        iterations: a.chain_iters,
        burn_in: a.burn_in,
        thin: a.thin,
        weights: ProposalWeights::default(),
        scale: a.scale,
        adapt: !a.no_adapt,
        seed: a.seed,
        prior,
        prior_only: a.prior_only,
    };
    config.validate()?;
    let mut run = Run::start(&a.out, "infer", argv, Some(a.seed))?;
    run.inputs.push(a.data.clone());
    run.inputs.extend(a.truth.clone());
    run.config = json!({ "chain": config, "model": model.spec() });
    let trace = mcmc::run_chain(&config, &model, if a.prior_only { None } else { Some(&data) })?;
    let mode = match prior {
        Prior::Kingman(_) => CanonicalMode::RootedUnranked,
        Prior::Uniform(_) => CanonicalMode::Unrooted,
    };
    run.write("trace.csv", mcmc::trace_csv(&trace, mode)?.as_bytes())?;
    run.write("trace.nwk", mcmc::trace_newick(&trace).as_bytes())?;
    let mut summary = serde_json::to_value(mcmc::diagnostics(&trace)?)?;
    if let Some(t) = &truth {
        summary["posterior_support"] = json!(mcmc::posterior_support(&trace, t, mode)?);
    }
    run.write("diagnostics.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    run.finish()
}

fn verify_cmd(a: &VerifyArgs) -> anyhow::Result<u8> {
    let config: VerifyConfig = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => VerifyConfig::default(),
    };
    let suite = match a.suite {
        SuiteArg::Pruning => Suite::Pruning,
        SuiteArg::Lemma1 => Suite::Lemma1,
        SuiteArg::Lemma2 => Suite::Lemma2,
        SuiteArg::Conditions => Suite::Conditions,
        SuiteArg::Priors => Suite::Priors,
    };
    let report = verify::run_suite(suite, &config)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => io::write_atomic(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    let failed = report.failures().count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", report.checks.len());
        return Ok(EXIT_NUMERIC);
    }
    Ok(0)
}

fn grid(a: &GridArgs, argv: &[String]) -> anyhow::Result<u8> {
    let spec: GridSpec =
        serde_json::from_str(&read(&a.spec)?).map_err(|e| Error::Config(format!("{}: {e}", a.spec.display())))?;
    spec.validate()?;
    let mut run = Run::start(&a.out, "grid", argv, None)?;
    run.master_seed = Some(spec.master_seed);
    run.inputs.push(a.spec.clone());
    run.config = serde_json::to_value(&spec)?;
    let rows = experiments::run_grid(&spec, a.workers)?;
    run.write("results.csv", experiments::results_csv(&rows).as_bytes())?;
    let failures: Vec<Value> = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(
                |e| json!({ "n": r.n, "mu": r.mu, "k": r.k, "replicate": r.replicate, "seed": r.seed, "error": e }),
            )
        })
        .collect();
    let code = if failures.is_empty() { 0 } else { EXIT_PARTIAL };
    if !failures.is_empty() {
        eprintln!("{} of {} cells failed", failures.len(), rows.len());
        run.write("errors.json", serde_json::to_string_pretty(&failures)?.as_bytes())?;
    }
    run.finish()?;
    Ok(code)
}

fn report(a: &ReportArgs, argv: &[String]) -> anyhow::Result<()> {
    let rows = experiments::parse_results_csv(&read(&a.results)?)?;
    let curves = experiments::aggregate(&rows)?;
    let crossings: Vec<_> = curves.iter().map(|c| experiments::threshold_crossing(c, a.level)).collect();
    let mut run = Run::start(&a.out, "report", argv, None)?;
    run.inputs.push(a.results.clone());
    run.config = json!({ "level": a.level });
    run.write("curves.csv", experiments::curves_csv(&curves).as_bytes())?;
    run.write("crossings.csv", experiments::crossings_csv(&crossings).as_bytes())?;
    run.finish()
}

fn rerun(a: &RerunArgs) -> anyhow::Result<u8> {
    let manifest: Manifest = serde_json::from_str(&read(&a.manifest)?)
        .map_err(|e| Error::Config(format!("{}: {e}", a.manifest.display())))?;
    let mut args = Vec::with_capacity(manifest.args.len() + 3);
    let mut it = manifest.args.iter();
    while let Some(x) = it.next() {
        match x.as_str() {
            "--out" => {
                it.next();
            }
            "--force" => {}
            s if s.starts_with("--out=") => {}
            _ => args.push(x.clone()),
        }
    }
    args.extend(["--out".to_string(), a.out.display().to_string()]);
    if a.force {
        args.push("--force".into());
    }
    if args.first().map(String::as_str) == Some("rerun") {
        bail!(Error::Config("a manifest cannot record a rerun".into()));
    }
    dispatch(args)
}

/// Exit code for a failed run.
fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn dispatch(args: Vec<String>) -> anyhow::Result<u8> {
    let argv = std::iter::once("phylocons".to_string()).chain(args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| anyhow!(Error::Config(e.to_string())))?;
    match &cli.command {
        Command::SimulateTrees(a) => simulate_trees(a, &args).map(|()| 0),
        Command::SimulateData(a) => simulate_data(a, &args).map(|()| 0),
        Command::Infer(a) => infer(a, &args).map(|()| 0),
        Command::Verify(a) => verify_cmd(a),
        Command::Grid(a) => grid(a, &args),
        Command::Report(a) => report(a, &args).map(|()| 0),
        Command::Rerun(a) => rerun(a),
    }
}

fn main() -> ExitCode {
    // Parse first so --help, --version and usage errors behave as clap defines.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = Cli::try_parse() {
        e.exit();
    }
    match dispatch(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn lambda_rules() {
        assert!(build_prior(PriorArg::Uniform, 5, None).unwrap_err().to_string().contains("lambda required"));
        assert!(build_prior(PriorArg::Kingman, 5, Some(1.0)).is_err());
        assert!(build_prior(PriorArg::Uniform, 5, Some(2.0)).is_ok());
    }
}
