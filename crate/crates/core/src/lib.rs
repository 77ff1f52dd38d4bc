//! Engine for LLM-backed agent-based simulations.

pub mod agent;
pub mod analysis;
pub mod promptkit;
pub mod provider;
pub mod runtime;
pub mod scenarios;
pub mod validation;

pub use agent::{AgentState, Decision, Observation, ObservationKind, ParserSpec};
pub use analysis::Series;
pub use promptkit::{ActiveVariants, PromptRegistry};
pub use provider::{ChatRequest, ChatResponse, LlmSettings, Provider, ProviderError, ProviderHandle};
pub use runtime::{ProviderMode, RunConfig, RunResult, RuntimeError, Scenario, ScenarioKind};
