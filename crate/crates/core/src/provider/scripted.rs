use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{ChatRequest, ChatResponse, Provider, ProviderError};

/// Deterministic stand-in for a model on one scenario. `respond` must be a
/// pure function of its inputs; any randomness is derived from the request
/// digest.
pub trait ScenarioOracle: Send + Sync {
    fn respond(&self, stage: &str, request: &ChatRequest) -> String;
}

impl<F> ScenarioOracle for F
where
    F: Fn(&str, &ChatRequest) -> String + Send + Sync,
{
    fn respond(&self, stage: &str, request: &ChatRequest) -> String {
        self(stage, request)
    }
}

/// The marker line placed first in every system message so that scripted
/// backends can route a request to its scenario oracle.
pub fn scenario_tag(scenario: &str, stage: &str) -> String {
    format!("[sabm:{scenario}:{stage}]")
}

/// Extracts `(scenario, stage)` from the first line of `text`.
pub fn parse_scenario_tag(text: &str) -> Option<(&str, &str)> {
    let line = text.lines().next()?.trim();
    let inner = line.strip_prefix("[sabm:")?.strip_suffix(']')?;
    let (scenario, stage) = inner.split_once(':')?;
    if scenario.is_empty() {
        return None;
    }
    Some((scenario, stage))
}

#[derive(Clone, Default)]
pub struct OracleRegistry {
    oracles: BTreeMap<String, Arc<dyn ScenarioOracle>>,
}

impl OracleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(mut self, scenario: impl Into<String>, oracle: Arc<dyn ScenarioOracle>) -> Self {
        self.oracles.insert(scenario.into(), oracle);
        self
    }

    pub fn get(&self, scenario: &str) -> Option<&Arc<dyn ScenarioOracle>> {
        self.oracles.get(scenario)
    }
}

/// Backend that answers from registered scenario oracles.
pub struct ScriptedProvider {
    registry: OracleRegistry,
    calls: AtomicU64,
}

impl ScriptedProvider {
    pub fn new(registry: OracleRegistry) -> Self {
        Self {
            registry,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let system = request.system_text().unwrap_or("");
        let (scenario, stage) = parse_scenario_tag(system)
            .ok_or_else(|| ProviderError::UnknownScenarioTag(system.lines().next().unwrap_or("").to_string()))?;
        let oracle = self
            .registry
            .get(scenario)
            .ok_or_else(|| ProviderError::UnknownScenarioTag(scenario.to_string()))?;
        Ok(ChatResponse::stop(oracle.respond(stage, request)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{LlmSettings, Message};

    #[test]
    fn tag_round_trip() {
        let tag = scenario_tag("guess", "guesser");
        assert_eq!(parse_scenario_tag(&format!("{tag}\nrules")), Some(("guess", "guesser")));
        assert_eq!(parse_scenario_tag("no tag"), None);
    }

    #[test]
    fn routes_by_tag() {
        let oracle: Arc<dyn ScenarioOracle> = Arc::new(|stage: &str, _: &ChatRequest| format!("stage={stage}"));
        let provider = ScriptedProvider::new(OracleRegistry::new().register("echo", oracle));
        let req = ChatRequest::new(
            LlmSettings::default(),
            vec![Message::system(scenario_tag("echo", "s1")), Message::user("hi")],
        )
        .unwrap();
        assert_eq!(provider.complete(&req).unwrap().content, "stage=s1");

        let other = ChatRequest::new(
            LlmSettings::default(),
            vec![Message::system(scenario_tag("nope", "s1"))],
        )
        .unwrap();
        assert!(matches!(
            provider.complete(&other),
            Err(ProviderError::UnknownScenarioTag(t)) if t == "nope"
        ));
    }
}
