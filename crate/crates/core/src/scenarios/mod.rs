//! The four built-in scenarios and dispatch by [`ScenarioKind`].

pub mod evac;
pub mod firm;
pub mod guess;
pub mod plea;
pub mod report;

use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::promptkit::{ActiveVariants, PromptRegistry};
use crate::provider::{OracleRegistry, ProviderHandle, ScriptedProvider};
use crate::runtime::{self, checkpoint_load, ProbeReport, RunConfig, RunResult, RuntimeError, ScenarioKind};

pub use evac::EvacScenario;
pub use firm::FirmScenario;
pub use guess::GuessScenario;
pub use plea::PleaScenario;

/// Oracles for every built-in scenario, keyed by scenario name.
pub fn scripted_oracles() -> OracleRegistry {
    OracleRegistry::new()
        .register(guess::NAME, Arc::new(guess::GuessOracle))
        .register(evac::NAME, Arc::new(evac::EvacOracle))
        .register(plea::NAME, Arc::new(plea::PleaOracle))
        .register(firm::NAME, Arc::new(firm::FirmOracle))
}

pub fn scripted_provider() -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::new(scripted_oracles()))
}

/// Deserializes scenario parameters; `null` selects the defaults.
pub fn params_from<P: DeserializeOwned + Default>(value: &Value) -> Result<P, RuntimeError> {
    if value.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| RuntimeError::Config(format!("scenario parameters: {e}")))
}

/// Overlays the keys of `overrides` onto `base` (both objects).
pub fn merge_params(base: &Value, overrides: &Value) -> Value {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            let mut merged = b.clone();
            for (k, v) in o {
                let next = match merged.get(k) {
                    Some(existing) => merge_params(existing, v),
                    None => v.clone(),
                };
                merged.insert(k.clone(), next);
            }
            Value::Object(merged)
        }
        (_, Value::Null) => base.clone(),
        _ => overrides.clone(),
    }
}

/// Runs the configured scenario.
pub fn run_scenario(
    config: &RunConfig,
    prompts: Arc<PromptRegistry>,
    provider: ProviderHandle,
) -> Result<RunResult, RuntimeError> {
    let p = &config.scenario_params;
    Ok(match config.scenario {
        ScenarioKind::Guess => runtime::run(&GuessScenario::new(params_from(p)?), config, prompts, provider)?.result,
        ScenarioKind::Evac => runtime::run(&EvacScenario::new(params_from(p)?), config, prompts, provider)?.result,
        ScenarioKind::Plea => runtime::run(&PleaScenario::new(params_from(p)?)?, config, prompts, provider)?.result,
        ScenarioKind::Firm => runtime::run(&FirmScenario::new(params_from(p)?), config, prompts, provider)?.result,
    })
}

/// Continues from a checkpoint. `overrides` is merged into the parameters
/// stored in the checkpoint before the scenario is rebuilt.
pub fn resume_scenario(
    checkpoint: &Path,
    output_dir: Option<&Path>,
    checkpoint_every: Option<u64>,
    overrides: &Value,
    prompts: Arc<PromptRegistry>,
    provider: ProviderHandle,
) -> Result<RunResult, RuntimeError> {
    let header: runtime::Checkpoint<Value> = checkpoint_load(checkpoint)?;
    let kind: ScenarioKind = header.scenario.parse()?;
    let p = merge_params(&header.params, overrides);
    let c = checkpoint;
    Ok(match kind {
        ScenarioKind::Guess => {
            runtime::resume(
                &GuessScenario::new(params_from(&p)?),
                c,
                output_dir,
                checkpoint_every,
                prompts,
                provider,
            )?
            .result
        }
        ScenarioKind::Evac => {
            runtime::resume(
                &EvacScenario::new(params_from(&p)?),
                c,
                output_dir,
                checkpoint_every,
                prompts,
                provider,
            )?
            .result
        }
        ScenarioKind::Plea => {
            runtime::resume(
                &PleaScenario::new(params_from(&p)?)?,
                c,
                output_dir,
                checkpoint_every,
                prompts,
                provider,
            )?
            .result
        }
        ScenarioKind::Firm => {
            runtime::resume(
                &FirmScenario::new(params_from(&p)?),
                c,
                output_dir,
                checkpoint_every,
                prompts,
                provider,
            )?
            .result
        }
    })
}

/// Runs a single-agent probe of the given scenario.
#[allow(clippy::too_many_arguments)]
pub fn probe_scenario(
    kind: ScenarioKind,
    params: &Value,
    spec: &Value,
    explain: bool,
    seed: u64,
    prompts: Arc<PromptRegistry>,
    variants: ActiveVariants,
    provider: ProviderHandle,
) -> Result<ProbeReport, RuntimeError> {
    match kind {
        ScenarioKind::Guess => runtime::probe(
            &GuessScenario::new(params_from(params)?),
            spec,
            explain,
            seed,
            prompts,
            variants,
            provider,
        ),
        ScenarioKind::Evac => runtime::probe(
            &EvacScenario::new(params_from(params)?),
            spec,
            explain,
            seed,
            prompts,
            variants,
            provider,
        ),
        ScenarioKind::Plea => runtime::probe(
            &PleaScenario::new(params_from(params)?)?,
            spec,
            explain,
            seed,
            prompts,
            variants,
            provider,
        ),
        ScenarioKind::Firm => runtime::probe(
            &FirmScenario::new(params_from(params)?),
            spec,
            explain,
            seed,
            prompts,
            variants,
            provider,
        ),
    }
}
