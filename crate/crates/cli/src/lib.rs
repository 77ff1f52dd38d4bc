//! The `sabm` command line: argument parsing, provider selection and the
//! five subcommands.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sabm_core::promptkit::{ActiveVariants, PromptRegistry};
use sabm_core::provider::{Budget, CacheMode, CachingProvider, LiveConfig, LiveProvider, ReplayStore};
use sabm_core::runtime::{
    checkpoint_load, log_path, metrics_path, read_events, Checkpoint, EventKind, ProviderMode, RunConfig, RunResult,
};
use sabm_core::scenarios::{self, report};
use sabm_core::validation::{self, ArmReport};
use sabm_core::{ProviderError, ProviderHandle, RuntimeError};
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{Backend, CommonArgs, FileConfig, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replay differs from {original}: first difference at line {line}")]
    ReplayMismatch { original: PathBuf, line: usize },
}

impl CliError {
    /// 2 for bad invocations, 1 for everything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sabm", version, about = "Run LLM-backed agent-based simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Compare prompt variants against the baseline over repeated runs.
    Validate(ValidateArgs),
    /// Ask a single agent about injected observations.
    Probe(ProbeArgs),
    /// Re-run a recorded run from the response cache and compare logs.
    Replay(ReplayArgs),
    /// Export tables and plots from a run log.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Continue from this checkpoint file instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Arm as `name=selector[,selector...]`; repeatable.
    #[arg(long = "arm")]
    pub arms: Vec<String>,
    /// Runs per arm.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Observation spec as JSON, or `@path` to read it from a file.
    #[arg(long)]
    pub spec: String,
    /// Ask the agent to explain its answer.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Log of the recorded run.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
}

/// Parses `args` and runs the command, writing the report to `out`.
pub fn dispatch(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let text = match &cli.command {
        Command::Run(args) => cmd_run(&cli.common, args)?,
        Command::Validate(args) => cmd_validate(&cli.common, args)?,
        Command::Probe(args) => cmd_probe(&cli.common, args)?,
        Command::Replay(args) => cmd_replay(&cli.common, args)?,
        Command::Analyze(args) => cmd_analyze(&cli.common, args)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn prompts(settings: &Settings) -> Result<Arc<PromptRegistry>, CliError> {
    let registry = match &settings.prompts {
        Some(dir) => PromptRegistry::builtin_with_overrides(dir).map_err(RuntimeError::from)?,
        None => PromptRegistry::builtin(),
    };
    Ok(Arc::new(registry))
}

fn live(settings: &Settings) -> Result<ProviderHandle, CliError> {
    let budget = Budget::new(settings.budget_calls, settings.budget_tokens);
    Ok(Arc::new(LiveProvider::new(LiveConfig::from_env()?, budget)?))
}

/// Builds providers for the configured mode. The backend and store are
/// shared; each call to [`Providers::next`] yields a handle for one run.
pub struct Providers {
    mode: ProviderMode,
    backend: Option<ProviderHandle>,
    store: Option<Arc<ReplayStore>>,
}

impl Providers {
    pub fn new(settings: &Settings) -> Result<Self, CliError> {
        let (backend, store) = match settings.provider {
            ProviderMode::Scripted => (Some(scenarios::scripted_provider() as ProviderHandle), None),
            ProviderMode::Live => (Some(live(settings)?), None),
            ProviderMode::Record => {
                let backend = match settings.backend {
                    Backend::Live => live(settings)?,
                    Backend::Scripted => scenarios::scripted_provider(),
                };
                (Some(backend), Some(Arc::new(ReplayStore::open(&settings.cache)?)))
            }
            ProviderMode::Replay => {
                if !settings.cache.exists() {
                    return Err(CliError::Provider(ProviderError::Store(format!(
                        "no response cache at {}",
                        settings.cache.display()
                    ))));
                }
                (None, Some(Arc::new(ReplayStore::open(&settings.cache)?)))
            }
        };
        Ok(Self {
            mode: settings.provider,
            backend,
            store,
        })
    }

    pub fn next(&self) -> ProviderHandle {
        match (self.mode, &self.store) {
            (ProviderMode::Record, Some(store)) => Arc::new(CachingProvider::new(
                store.clone(),
                CacheMode::Record,
                self.backend.clone(),
            )),
            (ProviderMode::Replay, Some(store)) => Arc::new(CachingProvider::replay(store.clone())),
            _ => self.backend.clone().expect("direct modes always have a backend"),
        }
    }
}

fn run_config(settings: &Settings, output_dir: &Path) -> RunConfig {
    let mut config = RunConfig::new(settings.scenario, settings.seed, settings.rounds);
    config.provider_mode = settings.provider;
    config.output_dir = Some(output_dir.to_path_buf());
    config.checkpoint_every = match settings.checkpoint_every {
        Some(0) => None,
        Some(n) => Some(n),
        None => config.checkpoint_every,
    };
    config.variants = settings.variants.clone();
    config.scenario_params = settings.params.clone();
    config
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn summary(result: &RunResult) -> String {
    let metric = result
        .metrics
        .get("metric")
        .map(Value::to_string)
        .unwrap_or_else(|| "-".into());
    let behavior = result.metrics.get("behavior").and_then(Value::as_str).unwrap_or("-");
    let mut text = format!(
        "run_id: {}\nexit: {} {}\nrounds: {}\nmetric: {metric}\nbehavior: {behavior}\n",
        result.run_id,
        result.exit.label(),
        serde_json::to_string(&result.exit).unwrap_or_default(),
        result.rounds,
    );
    if let Some(path) = &result.log_path {
        text.push_str(&format!("log: {}\n", path.display()));
    }
    text
}

pub fn cmd_run(common: &CommonArgs, args: &RunArgs) -> Result<String, CliError> {
    if let Some(checkpoint) = &args.resume {
        return resume(common, checkpoint);
    }
    let (_, settings) = config::load(common)?;
    create_dir(&settings.out)?;
    let providers = Providers::new(&settings)?;
    let config = run_config(&settings, &settings.out);
    let result = scenarios::run_scenario(&config, prompts(&settings)?, providers.next())?;
    Ok(summary(&result))
}

fn resume(common: &CommonArgs, checkpoint: &Path) -> Result<String, CliError> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let stored: Checkpoint<Value> = checkpoint_load(checkpoint)?;
    let mut flags = common.clone();
    flags.scenario = Some(stored.scenario);
    let settings = config::resolve(&file, &flags)?;
    let out = match common.out.clone().or(file.out.clone()) {
        Some(dir) => dir,
        None => checkpoint.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(&out)?;
    let providers = Providers::new(&settings)?;
    let every = match settings.checkpoint_every {
        Some(0) => None,
        Some(n) => Some(n),
        None => Some(100),
    };
    let result = scenarios::resume_scenario(
        checkpoint,
        Some(&out),
        every,
        &settings.params,
        prompts(&settings)?,
        providers.next(),
    )?;
    Ok(summary(&result))
}

/// Parses `name=sel1,sel2` arm flags.
pub fn parse_arm(text: &str) -> Result<(String, Vec<String>), CliError> {
    let (name, selectors) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--arm expects name=selector[,selector], got `{text}`")))?;
    let selectors: Vec<String> = selectors
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if name.trim().is_empty() || selectors.is_empty() {
        return Err(CliError::Usage(format!(
            "--arm `{text}` needs a name and at least one selector"
        )));
    }
    Ok((name.trim().to_string(), selectors))
}

pub fn cmd_validate(common: &CommonArgs, args: &ValidateArgs) -> Result<String, CliError> {
    let (file, settings) = config::load(common)?;
    let section = file.validate.unwrap_or_default();
    let arm_specs: Vec<(String, Vec<String>)> = if args.arms.is_empty() {
        section.arms.into_iter().map(|a| (a.name, a.variants)).collect()
    } else {
        args.arms.iter().map(|a| parse_arm(a)).collect::<Result<_, _>>()?
    };
    if arm_specs.is_empty() {
        return Err(CliError::Usage("validate needs at least one --arm".into()));
    }
    let mut arms = Vec::new();
    for (name, selectors) in arm_specs {
        let mut variants = settings.variants.clone();
        for (base, kind_variant) in config::parse_variants(&selectors)?.0 {
            variants.0.insert(base, kind_variant);
        }
        arms.push(validation::Arm { name, variants });
    }
    let runs = args.runs.or(section.runs).unwrap_or(config::DEFAULT_RUNS);
    let alpha = args.alpha.or(section.alpha).unwrap_or(config::DEFAULT_ALPHA);
    if runs < 2 {
        return Err(CliError::Usage("--runs must be at least 2".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }

    let dir = settings.out.join("validate");
    create_dir(&dir)?;
    let mut base = run_config(&settings, &dir);
    base.checkpoint_every = None;
    let plan = validation::ValidationPlan {
        base,
        arms,
        runs_per_arm: runs,
        alpha,
    };
    let registry = prompts(&settings)?;
    let providers = Providers::new(&settings)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let batch = |variants: &ActiveVariants| -> Result<Vec<RunResult>, CliError> {
        let configs = plan.arm_configs(variants);
        pool.install(|| {
            configs
                .par_iter()
                .map(|c| scenarios::run_scenario(c, registry.clone(), providers.next()).map_err(CliError::from))
                .collect()
        })
    };
    let baseline = validation::sample_from(&batch(&plan.base.variants)?);
    let mut reports: Vec<ArmReport> = Vec::new();
    for arm in &plan.arms {
        let sample = validation::sample_from(&batch(&arm.variants)?);
        reports.push(validation::compare(&arm.name, &baseline, &sample, alpha).map_err(RuntimeError::from)?);
    }

    let document = json!({
        "scenario": settings.scenario,
        "runs_per_arm": runs,
        "alpha": alpha,
        "baseline": {"variants": plan.base.variants, "mean": baseline.mean(), "label": baseline.modal_label()},
        "arms": reports,
    });
    let path = settings.out.join("validation.json");
    let body = serde_json::to_string_pretty(&document).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&path, body + "\n").map_err(|e| CliError::io(&path, e))?;

    let mut text = format!("baseline: mean {:.4} over {runs} runs\n", baseline.mean());
    for r in &reports {
        text.push_str(&format!(
            "{}: {:?} (mean {:.4}, {} = {:.4}{})\n",
            r.arm,
            r.variation.level,
            r.variant_mean,
            r.variation.evidence.statistic,
            r.variation.evidence.value,
            r.variation
                .evidence
                .p_value
                .map(|p| format!(", p = {p:.4}"))
                .unwrap_or_default(),
        ));
    }
    text.push_str(&format!("report: {}\n", path.display()));
    Ok(text)
}

fn read_spec(spec: &str) -> Result<Value, CliError> {
    let text = match spec.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::io(Path::new(path), e))?,
        None => spec.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--spec: {e}")))
}

pub fn cmd_probe(common: &CommonArgs, args: &ProbeArgs) -> Result<String, CliError> {
    let (_, settings) = config::load(common)?;
    let spec = read_spec(&args.spec)?;
    let providers = Providers::new(&settings)?;
    let report = scenarios::probe_scenario(
        settings.scenario,
        &settings.params,
        &spec,
        args.explain,
        settings.seed,
        prompts(&settings)?,
        settings.variants.clone(),
        providers.next(),
    )?;
    let body = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(body + "\n")
}

/// Reads the header of a run log.
fn log_header(path: &Path) -> Result<(Value, Option<u64>), CliError> {
    let events = read_events(path)?;
    let header = events
        .iter()
        .find_map(|e| e.payload.get("header").cloned())
        .ok_or_else(|| CliError::Usage(format!("{} has no run header", path.display())))?;
    let cadence = events.iter().find(|e| e.kind == EventKind::Checkpoint).map(|e| e.round);
    Ok((header, cadence))
}

pub fn cmd_replay(common: &CommonArgs, args: &ReplayArgs) -> Result<String, CliError> {
    let (header, cadence) = log_header(&args.log)?;
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut flags = common.clone();
    flags.scenario = header["scenario"].as_str().map(String::from);
    flags.provider = Some(ProviderMode::Replay.as_str().into());
    if flags.cache.is_none() && file.cache.is_none() {
        let dir = args.log.parent().unwrap_or(Path::new("."));
        flags.cache = Some(dir.join("cache.jsonl"));
    }
    let mut settings = config::resolve(&file, &flags)?;
    settings.seed = header["seed"].as_u64().unwrap_or_default();
    settings.rounds = header["max_rounds"].as_u64().unwrap_or(settings.rounds);
    settings.params = header["params"].clone();
    settings.variants =
        serde_json::from_value(header["variants"].clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    settings.checkpoint_every = Some(cadence.unwrap_or(0));

    let before = fs::read(&settings.cache).map_err(|e| CliError::io(&settings.cache, e))?;
    let dir = settings.out.join("replay");
    create_dir(&dir)?;
    let providers = Providers::new(&settings)?;
    let config = run_config(&settings, &dir);
    let result = scenarios::run_scenario(&config, prompts(&settings)?, providers.next())?;
    let after = fs::read(&settings.cache).map_err(|e| CliError::io(&settings.cache, e))?;
    if before != after {
        return Err(CliError::Provider(ProviderError::Store(
            "replay modified the response cache".into(),
        )));
    }

    let replayed = log_path(&dir, &result.run_id);
    let original = fs::read_to_string(&args.log).map_err(|e| CliError::io(&args.log, e))?;
    let copy = fs::read_to_string(&replayed).map_err(|e| CliError::io(&replayed, e))?;
    if original != copy {
        let line = original
            .lines()
            .zip(copy.lines())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| original.lines().count().min(copy.lines().count()))
            + 1;
        return Err(CliError::ReplayMismatch {
            original: args.log.clone(),
            line,
        });
    }
    Ok(format!(
        "{}replay: identical to {}\n",
        summary(&result),
        args.log.display()
    ))
}

pub fn cmd_analyze(common: &CommonArgs, args: &AnalyzeArgs) -> Result<String, CliError> {
    let events = read_events(&args.log)?;
    let metrics = sibling_metrics(&args.log)?;
    let out = match &common.out {
        Some(dir) => dir.clone(),
        None => args.log.parent().unwrap_or(Path::new(".")).join("analysis"),
    };
    create_dir(&out)?;
    let written = report::export_run(&events, metrics.as_ref(), &out)?;
    Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
}

/// The metrics file written next to `run-<id>.jsonl`, when present.
fn sibling_metrics(log: &Path) -> Result<Option<RunResult>, CliError> {
    let Some(id) = log
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("run-"))
        .and_then(|n| n.strip_suffix(".jsonl"))
    else {
        return Ok(None);
    };
    let path = metrics_path(log.parent().unwrap_or(Path::new(".")), id);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Runtime(RuntimeError::Serialization(format!("{}: {e}", path.display()))))
}
