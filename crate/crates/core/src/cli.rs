//! Command-line front end: argument parsing, config loading, dispatch and
//! atomic output writing.
//!
//! Exit codes: 0 success, 1 a `verify` check failed, 2 usage or invalid
//! input, 3 file-system failure, 4 numerical failure (divergence or no
//! convergence).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::hash::{bytes_hash, config_hash};
use crate::mdp::{ActionSpace, Mdp, TaskDistribution};
use crate::pruning::{calibrate_constant, run_sample_complexity, PruningLab, SampleComplexityConfig};
use crate::ra3::{run_ra3, EmConfig};
use crate::rlvr::{run_rlvr, updates_to_reach, GrpoConfig, VerifiableTask};
use crate::seq::{fit_ntp, Corpus, SeqModel};
use crate::smdp::{iterate_to_eps, PlanReport, PlanSettings};
use crate::verify;
use crate::world::{gen_corpus, SkillSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "RA3LAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: Error },
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Run(e) => match e {
                Error::Io(_) => EXIT_IO,
                Error::NoConvergence { .. } | Error::Divergence(_) => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ra3lab", version, about = "Temporal action abstraction laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Value iteration with options versus primitives.
    Plan(PlanArgs),
    /// Demonstration-driven pruning replications.
    Prune(PruneArgs),
    /// Generate a synthetic expert corpus.
    Gen(GenArgs),
    /// EM mid-training with think latents.
    Ra3(Ra3Args),
    /// GRPO post-training from one or more priors.
    Rlvr(RlvrArgs),
    /// Run the numbered checks and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub mdp: PathBuf,
    /// Option library; primitives only when omitted.
    #[arg(long)]
    pub options: Option<PathBuf>,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub delta: f64,
    /// Sample-size constant; calibrated on a separate stream when omitted.
    #[arg(long)]
    pub constant: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Ra3Args {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub iters: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RlvrArgs {
    /// Prior model JSON; repeat to compare priors. Named by file stem.
    #[arg(long = "prior", required = true)]
    pub priors: Vec<PathBuf>,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seeds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only these checks (repeatable); all when omitted.
    #[arg(long = "check")]
    pub checks: Vec<usize>,
    /// Also write the results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Base-model shape and fit for the `ra3` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseModelConfig {
    /// Vocabulary size; one past the largest corpus token when absent.
    pub n_tokens: Option<usize>,
    pub n_think: usize,
    pub decoder_order: usize,
    pub posterior_order: usize,
    pub alpha: f64,
    pub smoothing: f64,
    /// Prior pseudo-counts per posterior row in the annotated fit.
    pub prior_weight: f64,
}

impl Default for BaseModelConfig {
    fn default() -> Self {
        BaseModelConfig {
            n_tokens: None,
            n_think: 4,
            decoder_order: 1,
            posterior_order: 1,
            alpha: 0.95,
            smoothing: 0.1,
            prior_weight: 2.0,
        }
    }
}

/// Config file of the `ra3` command.
///
/// The first `seed_records` records must be annotated and fit the base
/// model; the last `held_out_records` are held out; the rest, with any
/// latents dropped, are the mid-training corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ra3RunConfig {
    pub model: BaseModelConfig,
    pub em: EmConfig,
    pub seed_records: usize,
    pub held_out_records: usize,
}

/// Sidecar stamped next to CSV and JSONL outputs.
#[derive(Debug, Serialize)]
struct Meta<'a, S: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    summary: S,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout and stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))
}

pub fn run(cli: Cli) -> CliResult<i32> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Plan(a) => plan(&a),
        Command::Prune(a) => prune(&a),
        Command::Gen(a) => gen(&a),
        Command::Ra3(a) => ra3(&a),
        Command::Rlvr(a) => rlvr(&a),
        Command::Verify(a) => run_verify(&a),
    })
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn parse_json<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Input { path: path.to_path_buf(), source: e.into() })
}

fn input<T>(path: &Path, r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_with_meta<S: Serialize>(path: &Path, bytes: &[u8], command: &str, hash: &str, summary: S) -> CliResult<()> {
    write_json(&meta_path(path), &Meta { command, config_hash: hash, summary })?;
    write_atomic(path, bytes)
}

fn usage_if(cond: bool, msg: &str) -> CliResult<()> {
    if cond {
        Err(CliError::Usage(msg.into()))
    } else {
        Ok(())
    }
}

#[derive(Serialize)]
struct PlanOutput {
    config_hash: String,
    eps: f64,
    /// The option library, or primitives when no library was given.
    options: PlanReport,
    primitive: PlanReport,
}

fn plan(a: &PlanArgs) -> CliResult<i32> {
    usage_if(!(a.eps > 0.0), "--eps must be positive")?;
    let mdp_bytes = read_bytes(&a.mdp)?;
    let mdp: Mdp = parse_json(&a.mdp, &mdp_bytes)?;
    let (space, opt_hash) = match &a.options {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let opts = parse_json(p, &bytes)?;
            (input(p, ActionSpace::new(opts, &mdp))?, bytes_hash(&bytes))
        }
        None => (ActionSpace::primitive(&mdp), String::new()),
    };
    let hash = config_hash(&("plan", bytes_hash(&mdp_bytes), opt_hash, a.eps));
    let settings = PlanSettings::default();
    let out = PlanOutput {
        config_hash: hash,
        eps: a.eps,
        options: iterate_to_eps(&mdp, &space, a.eps, settings)?,
        primitive: iterate_to_eps(&mdp, &ActionSpace::primitive(&mdp), a.eps, settings)?,
    };
    write_json(&a.out, &out)?;
    println!(
        "options: {} iterations (bound {}, gamma_bar {:.4}); primitives: {} iterations (bound {})",
        out.options.iterations, out.options.bound_n, out.options.gamma_bar, out.primitive.iterations, out.primitive.bound_n
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PruneSummary {
    constant: f64,
    calibrated: bool,
    z_size: usize,
    z_bar_size: usize,
    n_demos: usize,
    survival_rate: f64,
    subset_survival_rate: f64,
    threshold: f64,
    max_pruning_error: f64,
}

/// Grid searched when `prune` runs without `--constant`.
pub const CALIBRATION_GRID: [f64; 12] = verify::PRUNE_GRID;

fn prune(a: &PruneArgs) -> CliResult<i32> {
    usage_if(a.replications == 0, "--replications must be positive")?;
    let bytes = read_bytes(&a.dist)?;
    let dist: TaskDistribution = parse_json(&a.dist, &bytes)?;
    let lab = PruningLab::primitive(dist);
    let base = SampleComplexityConfig {
        eps: a.eps,
        sigma: a.sigma,
        delta: a.delta,
        constant: a.constant.unwrap_or(1.0),
        replications: a.replications,
        seed: a.seed,
    };
    let constant = match a.constant {
        Some(c) => c,
        None => calibrate_constant(&lab, &base, &CALIBRATION_GRID)?,
    };
    let cfg = SampleComplexityConfig { constant, ..base };
    let hash = config_hash(&("prune", bytes_hash(&bytes), &cfg, a.constant.is_none()));
    let rep = run_sample_complexity(&lab, &cfg)?;
    let summary = PruneSummary {
        constant,
        calibrated: a.constant.is_none(),
        z_size: rep.z_size,
        z_bar_size: rep.z_bar_size,
        n_demos: rep.n_demos,
        survival_rate: rep.survival_rate,
        subset_survival_rate: rep.subset_survival_rate,
        threshold: rep.threshold,
        max_pruning_error: rep.max_pruning_error,
    };
    println!(
        "n_demos {} (constant {constant}); suboptimal survival {:.3} (threshold {:.3}); max pruning error {:.3e}",
        rep.n_demos, rep.survival_rate, rep.threshold, rep.max_pruning_error
    );
    write_with_meta(&a.out, rep.to_csv().as_bytes(), "prune", &hash, summary)?;
    Ok(EXIT_OK)
}

fn gen(a: &GenArgs) -> CliResult<i32> {
    let bytes = read_bytes(&a.spec)?;
    let spec: SkillSpec = parse_json(&a.spec, &bytes)?;
    input(&a.spec, spec.validate())?;
    let hash = config_hash(&("gen", &spec));
    let world = gen_corpus(&spec)?;
    let summary = serde_json::json!({
        "records": world.corpus.len(),
        "tokens": world.corpus.n_tokens(),
        "seed": spec.seed,
    });
    write_with_meta(&a.out, world.corpus.to_jsonl().as_bytes(), "gen", &hash, summary)?;
    println!("wrote {} records ({} tokens)", world.corpus.len(), world.corpus.n_tokens());
    Ok(EXIT_OK)
}

fn ra3(a: &Ra3Args) -> CliResult<i32> {
    usage_if(a.iters == 0, "--iters must be positive")?;
    let cfg_bytes = read_bytes(&a.config)?;
    let cfg: Ra3RunConfig = parse_json(&a.config, &cfg_bytes)?;
    input(&a.config, cfg.em.validate())?;
    let corpus_bytes = read_bytes(&a.corpus)?;
    let text = String::from_utf8_lossy(&corpus_bytes);
    let corpus = input(&a.corpus, Corpus::from_jsonl(&text))?;
    let n = corpus.len();
    usage_if(
        cfg.seed_records + cfg.held_out_records + 2 * a.iters > n,
        "corpus too small for seed_records + held_out_records + 2 * iters shards",
    )?;
    let seed = corpus.slice(0..cfg.seed_records);
    let mid = corpus.slice(cfg.seed_records..n - cfg.held_out_records).without_latents();
    let held = corpus.slice(n - cfg.held_out_records..n);
    let m = &cfg.model;
    let n_tokens = match m.n_tokens {
        Some(v) => v,
        None => corpus.max_token().map_or(1, |t| t as usize + 1),
    };
    let mut pi0 = input(&a.config, SeqModel::new(n_tokens, m.n_think, m.decoder_order, m.posterior_order, m.alpha))?;
    if !seed.is_empty() {
        input(&a.corpus, pi0.fit_annotated(&seed, m.smoothing, m.prior_weight))?;
    }
    let hash = config_hash(&("ra3", bytes_hash(&corpus_bytes), &cfg, a.iters));
    let run = run_ra3(&pi0, &mid, (!held.is_empty()).then_some(&held), a.iters, &cfg.em)?;
    let ntp = fit_ntp(&mid, m.decoder_order, n_tokens, m.smoothing)?;

    std::fs::create_dir_all(&a.out).map_err(|source| CliError::Io { path: a.out.clone(), source })?;
    let report = serde_json::json!({ "config_hash": hash, "run_config": cfg, "report": run.report });
    write_json(&a.out.join("report.json"), &report)?;
    write_json(&a.out.join("model.json"), &run.model)?;
    write_json(&a.out.join("ntp_model.json"), &ntp)?;
    let last = run.report.iterations.last();
    let summary = serde_json::json!({
        "iterations": a.iters,
        "think_frequency": last.map(|i| i.think_frequency),
        "held_out_nll": last.and_then(|i| i.held_out_nll),
    });
    write_with_meta(&a.out.join("bootstrapped.jsonl"), run.bootstrapped.to_jsonl().as_bytes(), "ra3", &hash, &summary)?;
    write_with_meta(&a.out.join("reward_trace.csv"), run.report.reward_trace_csv().as_bytes(), "ra3", &hash, &summary)?;
    for it in &run.report.iterations {
        println!(
            "iteration {}: elbo/token {:.4}, think frequency {:.4}, held-out nll {}",
            it.iteration,
            it.elbo,
            it.think_frequency,
            it.held_out_nll.map_or("-".into(), |x| format!("{x:.4}"))
        );
    }
    Ok(EXIT_OK)
}

fn rlvr(a: &RlvrArgs) -> CliResult<i32> {
    usage_if(a.seeds == 0, "--seeds must be at least 1")?;
    let cfg_bytes = read_bytes(&a.config)?;
    let cfg: GrpoConfig = parse_json(&a.config, &cfg_bytes)?;
    input(&a.config, cfg.validate())?;
    let task_bytes = read_bytes(&a.tasks)?;
    let tasks: Vec<VerifiableTask> = parse_json(&a.tasks, &task_bytes)?;
    let mut priors = Vec::new();
    let mut prior_hashes = Vec::new();
    for p in &a.priors {
        let bytes = read_bytes(p)?;
        let model: SeqModel = parse_json(p, &bytes)?;
        input(p, model.validate())?;
        let name = p.file_stem().map_or_else(|| "prior".into(), |s| s.to_string_lossy().into_owned());
        usage_if(priors.iter().any(|(n, _): &(String, SeqModel)| *n == name), "prior file stems must be distinct")?;
        prior_hashes.push((name.clone(), bytes_hash(&bytes)));
        priors.push((name, model));
    }
    let hash = config_hash(&("rlvr", &cfg, bytes_hash(&task_bytes), &prior_hashes, a.seeds));
    let report = run_rlvr(&priors, &tasks, &cfg, a.seeds)?;
    let threshold = 0.9;
    let reach: Vec<serde_json::Value> = priors
        .iter()
        .map(|(name, _)| {
            let per_seed: Vec<usize> = (0..a.seeds as u64).map(|s| updates_to_reach(&report.curve(name, s), threshold)).collect();
            println!("{name}: updates to reach {threshold}: {per_seed:?}");
            serde_json::json!({ "prior": name, "updates_to_reach": per_seed })
        })
        .collect();
    let summary = serde_json::json!({ "threshold": threshold, "n_updates": cfg.n_updates, "priors": reach });
    write_with_meta(&a.out, report.to_csv().as_bytes(), "rlvr", &hash, summary)?;
    Ok(EXIT_OK)
}

fn run_verify(a: &VerifyArgs) -> CliResult<i32> {
    if let Some(bad) = a.checks.iter().find(|&&i| i == 0 || i > verify::N_CHECKS) {
        return Err(CliError::Usage(format!("no check numbered {bad} (valid: 1..={})", verify::N_CHECKS)));
    }
    let ids: Vec<usize> = if a.checks.is_empty() { (1..=verify::N_CHECKS).collect() } else { a.checks.clone() };
    let mut results = Vec::new();
    for id in ids {
        let c = verify::run_check(id);
        print!("{}", verify::render_table(std::slice::from_ref(&c)));
        results.push(c);
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if let Some(out) = &a.out {
        write_json(out, &results)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}
