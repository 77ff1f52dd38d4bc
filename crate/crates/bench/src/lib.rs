//! Helpers shared by the benchmarks.

use std::sync::Arc;

use sabm_core::runtime::{RunConfig, RunResult, ScenarioKind};
use sabm_core::scenarios;
use sabm_core::PromptRegistry;
use serde_json::Value;

/// One in-memory run against the scripted oracles.
pub fn scripted_run(
    prompts: &Arc<PromptRegistry>,
    kind: ScenarioKind,
    seed: u64,
    rounds: u64,
    params: Value,
) -> RunResult {
    let mut config = RunConfig::new(kind, seed, rounds);
    config.scenario_params = params;
    scenarios::run_scenario(&config, prompts.clone(), scenarios::scripted_provider()).expect("scripted runs succeed")
}

/// Two interleaved samples with ties, sized for the exact rank-sum path.
pub fn rank_samples(n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|k| (k % 7) as f64).collect();
    let b = (0..n).map(|k| (k % 5) as f64 + 1.0).collect();
    (a, b)
}
