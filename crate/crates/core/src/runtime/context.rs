use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::journal::{EventKind, Journal};
use super::rng::{RecordedDraws, RngState, SimRng};
use super::RuntimeError;
use crate::promptkit::{ActiveVariants, Bindings, PromptRegistry, PromptTemplate};
use crate::provider::{self, scenario_tag, CacheKey, ChatRequest, ChatResponse, ProviderHandle};

/// Everything a scenario step can touch: the journal, the random stream,
/// the provider and the prompt registry.
pub struct RunCtx {
    pub scenario: String,
    pub round: u64,
    pub stage: String,
    pub journal: Journal,
    rng: SimRng,
    recorded: Option<RecordedDraws>,
    provider: ProviderHandle,
    prompts: Arc<PromptRegistry>,
    variants: ActiveVariants,
}

impl RunCtx {
    pub fn new(
        scenario: impl Into<String>,
        journal: Journal,
        rng: SimRng,
        provider: ProviderHandle,
        prompts: Arc<PromptRegistry>,
        variants: ActiveVariants,
    ) -> Self {
        Self {
            scenario: scenario.into(),
            round: 0,
            stage: "init".into(),
            journal,
            rng,
            recorded: None,
            provider,
            prompts,
            variants,
        }
    }

    /// Takes random values from `draws` while they keep matching.
    pub fn with_recorded_draws(mut self, draws: RecordedDraws) -> Self {
        self.recorded = Some(draws);
        self
    }

    pub fn run_id(&self) -> &str {
        self.journal.run_id()
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }

    pub fn set_rng_state(&mut self, state: RngState) {
        self.rng = SimRng::from_state(state);
    }

    /// True once a recorded draw failed to match and the generator took over.
    pub fn replay_diverged(&self) -> bool {
        self.recorded.as_ref().is_some_and(|r| r.diverged)
    }

    pub fn variants(&self) -> &ActiveVariants {
        &self.variants
    }

    pub fn prompts(&self) -> &PromptRegistry {
        &self.prompts
    }

    pub fn set_stage(&mut self, stage: &str) {
        if self.stage != stage {
            self.stage = stage.to_string();
        }
    }

    pub fn record(
        &mut self,
        kind: EventKind,
        agent_id: Option<&str>,
        payload: Value,
        digest: Option<CacheKey>,
    ) -> Result<u64, RuntimeError> {
        let stage = self.stage.clone();
        self.journal.record(self.round, &stage, agent_id, kind, payload, digest)
    }

    /// Journals a world fact.
    pub fn world(&mut self, agent_id: Option<&str>, payload: impl Serialize) -> Result<u64, RuntimeError> {
        let payload = serde_json::to_value(payload).map_err(|e| RuntimeError::Serialization(e.to_string()))?;
        self.record(EventKind::World, agent_id, payload, None)
    }

    fn draw<T>(&mut self, purpose: &str, generate: impl FnOnce(&mut SimRng) -> T) -> Result<T, RuntimeError>
    where
        T: Serialize + serde::de::DeserializeOwned,
    {
        // The generator always advances so that its position stays aligned
        // with the recorded counters.
        let generated = generate(&mut self.rng);
        let recorded = self.recorded.as_mut().and_then(|r| r.take(purpose));
        let value = match recorded.and_then(|d| serde_json::from_value::<T>(d.value).ok()) {
            Some(v) => v,
            None => {
                if let Some(r) = self.recorded.as_mut() {
                    r.diverged = true;
                }
                generated
            }
        };
        let counter = self.rng.state().counter;
        let json_value = serde_json::to_value(&value).map_err(|e| RuntimeError::Serialization(e.to_string()))?;
        self.record(
            EventKind::Rng,
            None,
            json!({"purpose": purpose, "counter": counter, "value": json_value}),
            None,
        )?;
        Ok(value)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self, purpose: &str) -> Result<f64, RuntimeError> {
        self.draw(purpose, SimRng::next_f64)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, purpose: &str, n: u64) -> Result<u64, RuntimeError> {
        self.draw(purpose, |r| r.below(n))
    }

    pub fn standard_normal(&mut self, purpose: &str) -> Result<f64, RuntimeError> {
        self.draw(purpose, SimRng::standard_normal)
    }

    pub fn permutation(&mut self, purpose: &str, n: usize) -> Result<Vec<usize>, RuntimeError> {
        self.draw(purpose, |r| r.permutation(n))
    }

    /// Raw 64-bit draw, used to seed per-agent sub-decisions.
    pub fn next_u64(&mut self, purpose: &str) -> Result<u64, RuntimeError> {
        self.draw(purpose, SimRng::next_u64)
    }

    /// The template for `id` after applying the active variant selection.
    pub fn template(&self, id: &str) -> Result<PromptTemplate, RuntimeError> {
        Ok(self.prompts.resolve(id, &self.variants)?)
    }

    pub fn render(&self, id: &str, bindings: &Bindings) -> Result<String, RuntimeError> {
        Ok(self.template(id)?.render(bindings)?)
    }

    /// System message for `stage`: the routing tag, then `body` if any.
    pub fn system_message(&self, stage: &str, body: &str) -> String {
        let tag = scenario_tag(&self.scenario, stage);
        if body.is_empty() {
            tag
        } else {
            format!("{tag}\n{body}")
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, RuntimeError> {
        Ok(provider::complete(request, self.provider.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{OracleRegistry, ScriptedProvider};
    use crate::runtime::RngDraw;

    fn ctx() -> RunCtx {
        RunCtx::new(
            "t",
            Journal::in_memory("t-1"),
            SimRng::new(1),
            Arc::new(ScriptedProvider::new(OracleRegistry::new())),
            Arc::new(PromptRegistry::builtin()),
            ActiveVariants::none(),
        )
    }

    #[test]
    fn draws_are_journaled() {
        let mut c = ctx();
        let v = c.below("pick", 10).unwrap();
        assert!(v < 10);
        let line: Value = serde_json::from_str(&c.journal.memory_lines()[0]).unwrap();
        assert_eq!(line["kind"], "rng");
        assert_eq!(line["payload"]["purpose"], "pick");
        assert_eq!(line["payload"]["value"], v);
    }

    #[test]
    fn recorded_draws_win_until_mismatch() {
        let draws = RecordedDraws::new([RngDraw {
            purpose: "pick".into(),
            counter: 1,
            value: Value::from(7),
        }]);
        let mut c = ctx().with_recorded_draws(draws);
        assert_eq!(c.below("pick", 10).unwrap(), 7);
        assert!(!c.replay_diverged());
        c.below("other", 10).unwrap();
        assert!(c.replay_diverged());
    }
}
