//! The round loop, run identity and resume.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CHECKPOINT_VERSION};
use super::exit::{check_exit, ExitReason, ExitSpec};
use super::journal::{EventKind, Journal, JournalCursor, JournalDetail};
use super::rng::{RecordedDraws, RngDraw, RngState, SimRng};
use super::{RunCtx, RuntimeError};
use crate::promptkit::{ActiveVariants, PromptRegistry};
use crate::provider::ProviderHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Guess,
    Evac,
    Plea,
    Firm,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Guess, Self::Evac, Self::Plea, Self::Firm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Guess => "guess",
            Self::Evac => "evac",
            Self::Plea => "plea",
            Self::Firm => "firm",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RuntimeError::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Scripted,
    Record,
    Replay,
}

impl ProviderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Live => "live",
            Self::Scripted => "scripted",
            Self::Record => "record",
            Self::Replay => "replay",
        }
    }
}

impl FromStr for ProviderMode {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Live, Self::Scripted, Self::Record, Self::Replay]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RuntimeError::Config(format!("unknown provider mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub provider_mode: ProviderMode,
    pub max_rounds: u64,
    pub output_dir: Option<PathBuf>,
    /// Checkpoint cadence in rounds; `None` disables periodic checkpoints.
    pub checkpoint_every: Option<u64>,
    pub journal_detail: JournalDetail,
    pub variants: ActiveVariants,
    pub scenario_params: Value,
    /// Random draws from an earlier log, consumed before the generator.
    #[serde(skip)]
    pub recorded_draws: Option<Vec<RngDraw>>,
}

impl RunConfig {
    pub fn new(scenario: ScenarioKind, seed: u64, max_rounds: u64) -> Self {
        Self {
            scenario,
            seed,
            provider_mode: ProviderMode::Scripted,
            max_rounds,
            output_dir: None,
            checkpoint_every: Some(100),
            journal_detail: JournalDetail::Full,
            variants: ActiveVariants::none(),
            scenario_params: Value::Null,
            recorded_draws: None,
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.max_rounds == 0 {
            return Err(RuntimeError::Config("max_rounds must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(RuntimeError::Config("checkpoint cadence must be at least 1".into()));
        }
        Ok(())
    }
}

pub enum StepOutcome {
    Continue,
    /// The scenario reached its natural end.
    Endpoint(String),
}

/// A simulation driven by the round loop.
pub trait Scenario {
    type State: Serialize + DeserializeOwned + Clone;

    const NAME: &'static str;

    /// Parameters that identify the run (hashed into the run id).
    fn params(&self) -> Value;

    /// Stage names in the order they run within a round.
    fn stages(&self) -> &'static [&'static str];

    fn init(&self, ctx: &mut RunCtx) -> Result<Self::State, RuntimeError>;

    fn step(&self, ctx: &mut RunCtx, state: &mut Self::State) -> Result<StepOutcome, RuntimeError>;

    fn series<'s>(&self, state: &'s Self::State, name: &str) -> Option<&'s [f64]>;

    fn exit_specs(&self) -> Vec<ExitSpec>;

    fn metrics(&self, state: &Self::State) -> Value;

    /// Adjusts a state loaded from a checkpoint to this scenario's settings.
    fn on_resume(&self, _state: &mut Self::State) {}

    /// Runs one agent against injected observations. `spec` is
    /// scenario-specific.
    fn probe(&self, _ctx: &mut RunCtx, _spec: &Value, _explain: bool) -> Result<(), RuntimeError> {
        Err(RuntimeError::Scenario(format!(
            "{} does not support probes",
            Self::NAME
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub scenario: String,
    pub seed: u64,
    pub exit: ExitReason,
    /// Completed rounds.
    pub rounds: u64,
    pub metrics: Value,
    pub log_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    /// Recorded draws stopped matching and the generator took over.
    pub replay_diverged: bool,
}

pub struct RunOutput<S> {
    pub result: RunResult,
    pub state: S,
    /// Log lines when the run had no output directory.
    pub log: Vec<String>,
}

/// `{scenario}-{seed}-{8 hex}` where the suffix digests the parameters.
/// Provider mode and output location do not affect the id.
pub fn run_id(scenario: &str, seed: u64, params: &Value, max_rounds: u64, variants: &ActiveVariants) -> String {
    let canonical = json!({
        "scenario": scenario,
        "seed": seed,
        "params": params,
        "max_rounds": max_rounds,
        "variants": variants,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    format!("{scenario}-{seed}-{}", hex::encode(&digest[..4]))
}

pub fn log_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("run-{run_id}.jsonl"))
}

pub fn metrics_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("run-{run_id}.metrics.json"))
}

fn checkpoint_path(dir: &Path, run_id: &str, round: u64) -> PathBuf {
    dir.join(format!("run-{run_id}.ckpt-{round}"))
}

struct Driver<'a, S: Scenario> {
    scenario: &'a S,
    run_id: String,
    seed: u64,
    max_rounds: u64,
    params: Value,
    variants: ActiveVariants,
    output_dir: Option<PathBuf>,
    checkpoint_every: Option<u64>,
    checkpoints: Vec<PathBuf>,
}

impl<S: Scenario> Driver<'_, S> {
    fn log_file(&self) -> String {
        format!("run-{}.jsonl", self.run_id)
    }

    fn write_checkpoint(
        &mut self,
        round: u64,
        state: &S::State,
        rng: RngState,
        cursor: JournalCursor,
    ) -> Result<Option<PathBuf>, RuntimeError> {
        let Some(dir) = &self.output_dir else {
            return Ok(None);
        };
        let path = checkpoint_path(dir, &self.run_id, round);
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            scenario: S::NAME.to_string(),
            run_id: self.run_id.clone(),
            round,
            seed: self.seed,
            max_rounds: self.max_rounds,
            params: self.params.clone(),
            variants: self.variants.clone(),
            state,
            rng,
            cursor,
            log_file: self.log_file(),
        };
        checkpoint_save(&path, &checkpoint)?;
        self.checkpoints.push(path.clone());
        Ok(Some(path))
    }

    fn finish(
        &self,
        ctx: &mut RunCtx,
        state: &S::State,
        exit: ExitReason,
        rounds: u64,
    ) -> Result<RunResult, RuntimeError> {
        ctx.journal.flush()?;
        let metrics = self.scenario.metrics(state);
        let mut result = RunResult {
            run_id: self.run_id.clone(),
            scenario: S::NAME.to_string(),
            seed: self.seed,
            exit,
            rounds,
            metrics,
            log_path: ctx.journal.path().map(Path::to_path_buf),
            metrics_path: None,
            checkpoints: self.checkpoints.clone(),
            replay_diverged: ctx.replay_diverged(),
        };
        if let Some(dir) = &self.output_dir {
            let path = metrics_path(dir, &self.run_id);
            let text = serde_json::to_string_pretty(&result).map_err(|e| RuntimeError::Serialization(e.to_string()))?;
            std::fs::write(&path, text).map_err(|e| RuntimeError::io(&path, e))?;
            result.metrics_path = Some(path);
        }
        Ok(result)
    }

    /// Rounds `first..=max_rounds`.
    fn drive(
        &mut self,
        ctx: &mut RunCtx,
        mut state: S::State,
        first: u64,
    ) -> Result<RunOutput<S::State>, RuntimeError> {
        let specs = self.scenario.exit_specs();
        let stages = self.scenario.stages();
        let mut completed = first.saturating_sub(1);
        let mut exit = None;
        for round in first..=self.max_rounds {
            ctx.round = round;
            ctx.set_stage(stages.first().copied().unwrap_or("step"));
            let before = state.clone();
            let rng_before = ctx.rng_state();
            let cursor_before = ctx.journal.cursor();
            let outcome = match self.scenario.step(ctx, &mut state) {
                Ok(outcome) => outcome,
                Err(source) => {
                    ctx.journal.flush()?;
                    let checkpoint = self.write_checkpoint(round - 1, &before, rng_before, cursor_before)?;
                    ctx.set_stage("exit");
                    let reason = ExitReason::Aborted {
                        error: source.to_string(),
                    };
                    ctx.record(EventKind::Detector, None, json!({"exit": reason}), None)?;
                    self.finish(ctx, &before, reason, round - 1)?;
                    return Err(RuntimeError::Aborted {
                        round,
                        checkpoint,
                        source: Box::new(source),
                    });
                }
            };
            completed = round;
            let endpoint = match &outcome {
                StepOutcome::Endpoint(reason) => Some(reason.as_str()),
                StepOutcome::Continue => None,
            };
            let scenario = self.scenario;
            let lookup = |name: &str| scenario.series(&state, name);
            let mut reason = check_exit(&specs, round, endpoint, &lookup)?;
            if reason.is_none() {
                if let Some(r) = endpoint {
                    reason = Some(ExitReason::Endpoint { reason: r.to_string() });
                }
            }
            if let Some(reason) = reason {
                exit = Some(reason);
                break;
            }
            if let Some(every) = self.checkpoint_every {
                if round % every == 0 && self.output_dir.is_some() && round < self.max_rounds {
                    ctx.set_stage("checkpoint");
                    let file = format!("run-{}.ckpt-{round}", self.run_id);
                    ctx.record(EventKind::Checkpoint, None, json!({"file": file}), None)?;
                    ctx.journal.flush()?;
                    let (rng, cursor) = (ctx.rng_state(), ctx.journal.cursor());
                    self.write_checkpoint(round, &state, rng, cursor)?;
                }
            }
        }
        let exit = exit.unwrap_or(ExitReason::RoundCap { rounds: completed });
        ctx.set_stage("exit");
        ctx.record(EventKind::Detector, None, json!({"exit": exit}), None)?;
        let result = self.finish(ctx, &state, exit, completed)?;
        Ok(RunOutput {
            result,
            state,
            log: ctx.journal.memory_lines().to_vec(),
        })
    }
}

/// Executes a scenario from initialization until an exit condition fires or
/// `max_rounds` rounds complete.
pub fn run<S: Scenario>(
    scenario: &S,
    config: &RunConfig,
    prompts: Arc<PromptRegistry>,
    provider: ProviderHandle,
) -> Result<RunOutput<S::State>, RuntimeError> {
    config.validate()?;
    if config.scenario.as_str() != S::NAME {
        return Err(RuntimeError::Config(format!(
            "configuration names scenario `{}` but `{}` was supplied",
            config.scenario,
            S::NAME
        )));
    }
    prompts.check_active(&config.variants)?;
    let params = scenario.params();
    let id = run_id(S::NAME, config.seed, &params, config.max_rounds, &config.variants);
    let mut journal = match &config.output_dir {
        Some(dir) => Journal::create(&log_path(dir, &id), &id)?,
        None => Journal::in_memory(&id),
    };
    journal.detail = config.journal_detail;
    let mut ctx = RunCtx::new(
        S::NAME,
        journal,
        SimRng::new(config.seed),
        provider,
        prompts,
        config.variants.clone(),
    );
    if let Some(draws) = &config.recorded_draws {
        ctx = ctx.with_recorded_draws(RecordedDraws::new(draws.iter().cloned()));
    }
    ctx.record(
        EventKind::World,
        None,
        json!({"header": {
            "scenario": S::NAME,
            "seed": config.seed,
            "max_rounds": config.max_rounds,
            "params": params,
            "variants": config.variants,
        }}),
        None,
    )?;
    let state = scenario.init(&mut ctx)?;
    let mut driver = Driver {
        scenario,
        run_id: id,
        seed: config.seed,
        max_rounds: config.max_rounds,
        params,
        variants: config.variants.clone(),
        output_dir: config.output_dir.clone(),
        checkpoint_every: config.checkpoint_every,
        checkpoints: Vec::new(),
    };
    driver.drive(&mut ctx, state, 1)
}

/// Continues a run from a checkpoint file. The log prefix up to the
/// checkpoint cursor is copied into `output_dir` (or truncated in place when
/// that is the checkpoint's own directory) and the loop resumes at the next
/// round.
pub fn resume<S: Scenario>(
    scenario: &S,
    checkpoint: &Path,
    output_dir: Option<&Path>,
    checkpoint_every: Option<u64>,
    prompts: Arc<PromptRegistry>,
    provider: ProviderHandle,
) -> Result<RunOutput<S::State>, RuntimeError> {
    let loaded: Checkpoint<S::State> = checkpoint_load(checkpoint)?;
    if loaded.scenario != S::NAME {
        return Err(RuntimeError::Checkpoint(format!(
            "checkpoint is for scenario `{}`, not `{}`",
            loaded.scenario,
            S::NAME
        )));
    }
    let source_dir = checkpoint.parent().unwrap_or(Path::new("."));
    let out_dir = output_dir.unwrap_or(source_dir).to_path_buf();
    let source = source_dir.join(&loaded.log_file);
    let journal = Journal::resume(&out_dir.join(&loaded.log_file), &source, &loaded.run_id, loaded.cursor)?;
    let mut ctx = RunCtx::new(
        S::NAME,
        journal,
        SimRng::from_state(loaded.rng),
        provider,
        prompts,
        loaded.variants.clone(),
    );
    ctx.round = loaded.round;
    let mut state = loaded.state;
    scenario.on_resume(&mut state);
    let mut driver = Driver {
        scenario,
        run_id: loaded.run_id,
        seed: loaded.seed,
        max_rounds: loaded.max_rounds,
        params: loaded.params,
        variants: loaded.variants,
        output_dir: Some(out_dir),
        checkpoint_every,
        checkpoints: Vec::new(),
    };
    driver.drive(&mut ctx, state, loaded.round + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_ignores_nothing_it_hashes() {
        let v = ActiveVariants::none();
        let a = run_id("guess", 1, &json!({"target": 28}), 20, &v);
        assert!(a.starts_with("guess-1-"));
        assert_eq!(a.len(), "guess-1-".len() + 8);
        assert_eq!(a, run_id("guess", 1, &json!({"target": 28}), 20, &v));
        assert_ne!(a, run_id("guess", 1, &json!({"target": 29}), 20, &v));
        assert_ne!(a, run_id("guess", 1, &json!({"target": 28}), 21, &v));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("firm".parse::<ScenarioKind>().unwrap(), ScenarioKind::Firm);
        assert!("chess".parse::<ScenarioKind>().is_err());
        assert_eq!("replay".parse::<ProviderMode>().unwrap(), ProviderMode::Replay);
    }
}
