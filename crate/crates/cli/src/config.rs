//! Command-line and config-file settings. Every flag has a file key of the
//! same name (with `_` for `-`); flags win over the file, the file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use sabm_core::promptkit::ActiveVariants;
use sabm_core::runtime::{ProviderMode, ScenarioKind};
use sabm_core::scenarios::merge_params;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const DEFAULT_BUDGET_CALLS: u64 = 5_000;
pub const DEFAULT_BUDGET_TOKENS: u64 = 5_000_000;
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_RUNS: usize = 20;

/// Backend wrapped by the record cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Live,
    Scripted,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for any of these settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// live, scripted, record or replay.
    #[arg(long, global = true)]
    pub provider: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Round limit.
    #[arg(long, global = true)]
    pub rounds: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for batches.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub budget_calls: Option<u64>,
    #[arg(long, global = true)]
    pub budget_tokens: Option<u64>,
    /// Replay store; defaults to `<out>/cache.jsonl`.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Backend recorded in record mode.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    /// Directory of prompt files overriding the built-in ones.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    /// Prompt variant as `base_id:kind:variant_id`; repeatable.
    #[arg(long = "variant", global = true)]
    pub variants: Vec<String>,
    #[arg(long, global = true)]
    pub checkpoint_every: Option<u64>,
    /// Scenario parameter as `key=value` (value parsed as JSON when it can
    /// be); repeatable.
    #[arg(long = "param", global = true)]
    pub params: Vec<String>,
    /// Number to guess (guess scenario).
    #[arg(long, global = true)]
    pub target: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<String>,
    pub provider: Option<String>,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub budget_calls: Option<u64>,
    pub budget_tokens: Option<u64>,
    pub cache: Option<PathBuf>,
    pub backend: Option<Backend>,
    pub prompts: Option<PathBuf>,
    pub variants: Option<Vec<String>>,
    pub checkpoint_every: Option<u64>,
    pub target: Option<i64>,
    pub params: Option<toml::Table>,
    pub validate: Option<ValidateFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateFile {
    pub runs: Option<usize>,
    pub alpha: Option<f64>,
    pub arms: Vec<ArmFile>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmFile {
    pub name: String,
    pub variants: Vec<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scenario: ScenarioKind,
    pub provider: ProviderMode,
    pub seed: u64,
    pub rounds: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub budget_calls: u64,
    pub budget_tokens: u64,
    pub cache: PathBuf,
    pub backend: Backend,
    pub prompts: Option<PathBuf>,
    pub variants: ActiveVariants,
    pub checkpoint_every: Option<u64>,
    pub params: Value,
}

/// Round limit when neither flag nor file gives one.
pub fn default_rounds(kind: ScenarioKind) -> u64 {
    match kind {
        ScenarioKind::Guess => 30,
        ScenarioKind::Evac => 100,
        ScenarioKind::Plea => 100,
        ScenarioKind::Firm => 1000,
    }
}

pub fn parse_variants(selectors: &[String]) -> Result<ActiveVariants, CliError> {
    let mut active = ActiveVariants::none();
    for s in selectors {
        let (base, kind, variant) = ActiveVariants::parse_selector(s).map_err(|e| CliError::Usage(e.to_string()))?;
        active = active.with(base, kind, variant);
    }
    Ok(active)
}

fn param_pairs(pairs: &[String]) -> Result<Value, CliError> {
    let mut map = Map::new();
    for pair in pairs {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects key=value, got `{pair}`")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.trim().to_string(), value);
    }
    Ok(Value::Object(map))
}

fn usage<T: std::str::FromStr>(text: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e: T::Err| CliError::Usage(e.to_string()))
}

/// Merges flags over the file over defaults.
pub fn resolve(file: &FileConfig, flags: &CommonArgs) -> Result<Settings, CliError> {
    let scenario = flags
        .scenario
        .as_deref()
        .or(file.scenario.as_deref())
        .ok_or_else(|| CliError::Usage("--scenario is required".into()))?;
    let scenario: ScenarioKind = usage(scenario)?;
    let provider = match flags.provider.as_deref().or(file.provider.as_deref()) {
        Some(p) => usage(p)?,
        None => ProviderMode::Scripted,
    };
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let cache = flags
        .cache
        .clone()
        .or_else(|| file.cache.clone())
        .unwrap_or_else(|| out.join("cache.jsonl"));
    let variants = if flags.variants.is_empty() {
        parse_variants(file.variants.as_deref().unwrap_or_default())?
    } else {
        parse_variants(&flags.variants)?
    };
    let file_params = match &file.params {
        Some(t) => serde_json::to_value(t).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Value::Object(Map::new()),
    };
    let mut params = merge_params(&file_params, &param_pairs(&flags.params)?);
    if let Some(target) = flags.target.or(file.target) {
        if scenario != ScenarioKind::Guess {
            return Err(CliError::Usage("--target only applies to the guess scenario".into()));
        }
        params = merge_params(&params, &serde_json::json!({"target": target}));
    }
    let jobs = flags.jobs.or(file.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    Ok(Settings {
        scenario,
        provider,
        seed: flags.seed.or(file.seed).unwrap_or(0),
        rounds: flags.rounds.or(file.rounds).unwrap_or_else(|| default_rounds(scenario)),
        out,
        jobs,
        budget_calls: flags.budget_calls.or(file.budget_calls).unwrap_or(DEFAULT_BUDGET_CALLS),
        budget_tokens: flags
            .budget_tokens
            .or(file.budget_tokens)
            .unwrap_or(DEFAULT_BUDGET_TOKENS),
        cache,
        backend: flags.backend.or(file.backend).unwrap_or(Backend::Live),
        prompts: flags.prompts.clone().or_else(|| file.prompts.clone()),
        variants,
        checkpoint_every: flags.checkpoint_every.or(file.checkpoint_every),
        params,
    })
}

/// Loads the file named by `--config` (if any) and resolves.
pub fn load(flags: &CommonArgs) -> Result<(FileConfig, Settings), CliError> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = resolve(&file, flags)?;
    Ok((file, settings))
}
