//! Single-agent probes: one agent, injected observations, no world.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::journal::{EventKind, EventRecord, Journal};
use super::rng::SimRng;
use super::{RunCtx, RuntimeError, Scenario};
use crate::promptkit::{ActiveVariants, PromptRegistry};
use crate::provider::ProviderHandle;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub agent_id: Option<String>,
    pub stage: String,
    /// Final user message of the request that produced the parsed action.
    pub prompt: String,
    pub response: String,
    pub parsed: Value,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub scenario: String,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    /// Rebuilds the report from journal records.
    pub fn from_events(scenario: &str, events: &[EventRecord]) -> Self {
        let mut entries: Vec<ProbeEntry> = Vec::new();
        let mut parsed_seq: Vec<u64> = Vec::new();
        let mut pending = ProbeEntry::default();
        for event in events {
            let purpose = event.payload.get("purpose").and_then(Value::as_str).unwrap_or("act");
            match (event.kind, purpose) {
                (EventKind::Prompt, "act") => {
                    pending.agent_id = event.agent_id.clone();
                    pending.stage = event.stage.clone();
                    pending.prompt = last_user(&event.payload);
                }
                (EventKind::Response, "act") => {
                    pending.response = event
                        .payload
                        .get("content")
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .to_string();
                }
                (EventKind::Parsed, _) => {
                    pending.parsed = event.payload.clone();
                    parsed_seq.push(event.seq);
                    entries.push(std::mem::take(&mut pending));
                }
                (EventKind::Response, "explain") => {
                    let target = event.payload.get("explains").and_then(Value::as_u64);
                    if let Some(i) = target.and_then(|t| parsed_seq.iter().position(|&s| s == t)) {
                        entries[i].explanation =
                            event.payload.get("content").and_then(Value::as_str).map(str::to_string);
                    }
                }
                _ => {}
            }
        }
        Self {
            scenario: scenario.to_string(),
            entries,
        }
    }
}

fn last_user(payload: &Value) -> String {
    payload
        .get("messages")
        .and_then(Value::as_array)
        .and_then(|ms| {
            ms.iter()
                .rev()
                .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))
        })
        .and_then(|m| m.get("content").and_then(Value::as_str))
        .unwrap_or("")
        .to_string()
}

/// Runs `scenario`'s probe harness against `spec` and collects every prompt
/// and parsed action it produced.
pub fn probe<S: Scenario>(
    scenario: &S,
    spec: &Value,
    explain: bool,
    seed: u64,
    prompts: Arc<PromptRegistry>,
    variants: ActiveVariants,
    provider: ProviderHandle,
) -> Result<ProbeReport, RuntimeError> {
    prompts.check_active(&variants)?;
    let run_id = format!("probe-{}-{seed}", S::NAME);
    let mut ctx = RunCtx::new(
        S::NAME,
        Journal::in_memory(&run_id),
        SimRng::new(seed),
        provider,
        prompts,
        variants,
    );
    ctx.set_stage("probe");
    scenario.probe(&mut ctx, spec, explain)?;
    let events: Vec<EventRecord> = ctx
        .journal
        .memory_lines()
        .iter()
        .map(|l| serde_json::from_str(l).map_err(|e| RuntimeError::Journal(e.to_string())))
        .collect::<Result<_, _>>()?;
    Ok(ProbeReport::from_events(S::NAME, &events))
}
