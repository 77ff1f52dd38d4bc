//! Agents: persona, bounded memory, plan, and the prompt/parse cycle that
//! turns a stage template into an action.

mod parser;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::promptkit::{Bindings, PromptTemplate};
use crate::provider::{ChatRequest, ChatResponse, LlmSettings, Message};
use crate::runtime::{EventKind, JournalDetail, RunCtx, RuntimeError};

pub use parser::{ActionValue, ParsedAction, ParserSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    OwnAction,
    Feedback,
    HeardMessage,
    WorldInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub round: u64,
    pub kind: ObservationKind,
    pub content: String,
}

impl Observation {
    pub fn new(round: u64, kind: ObservationKind, content: impl Into<String>) -> Self {
        Self {
            round,
            kind,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: String,
    pub persona: String,
    /// Task description placed in the system message after the routing tag.
    pub system: String,
    pub settings: LlmSettings,
    pub history: VecDeque<Observation>,
    pub capacity: usize,
    pub plan: Option<String>,
    /// Scenario-specific attributes.
    pub attrs: Value,
}

impl AgentState {
    pub fn new(agent_id: impl Into<String>, settings: LlmSettings, capacity: usize) -> Self {
        Self {
            agent_id: agent_id.into(),
            persona: String::new(),
            system: String::new(),
            settings,
            history: VecDeque::new(),
            capacity,
            plan: None,
            attrs: Value::Null,
        }
    }

    /// Appends `obs`, evicting the oldest entries beyond capacity. An
    /// observation older than the newest one is stamped with the newest
    /// round so that rounds never decrease within the history.
    pub fn observe(mut self, obs: Observation) -> Self {
        self.push(obs);
        self
    }

    pub fn push(&mut self, mut obs: Observation) {
        if let Some(last) = self.history.back() {
            obs.round = obs.round.max(last.round);
        }
        self.history.push_back(obs);
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
    }

    pub fn personalize(mut self, persona: impl Into<String>) -> Self {
        self.persona = persona.into();
        self
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = system.into();
        self
    }

    pub fn with_plan(mut self, plan: Option<String>) -> Self {
        self.plan = plan;
        self
    }

    pub fn observations(&self, kind: ObservationKind) -> impl Iterator<Item = &Observation> {
        self.history.iter().filter(move |o| o.kind == kind)
    }
}

/// The parsed result of one `act`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: ParsedAction,
    /// Sequence number of the journaled `parsed` event.
    pub seq: u64,
    /// User message of the first attempt.
    pub prompt: String,
    pub retried: bool,
}

fn plan_clause(plan: &str) -> String {
    format!("Your strategy for this round is: {plan}")
}

/// Renders `template`, binding the persona to a `persona` placeholder when
/// the template has one and otherwise placing it first. The plan clause, when
/// requested, follows the persona.
fn compose(
    agent: &AgentState,
    template: &PromptTemplate,
    bindings: &Bindings,
    with_plan: bool,
) -> Result<String, RuntimeError> {
    let persona_slot = template.placeholders.contains("persona");
    let body = if persona_slot {
        let mut b = bindings.clone();
        b.insert("persona".into(), agent.persona.clone());
        template.render(&b)?
    } else {
        template.render(bindings)?
    };
    let mut parts: Vec<String> = Vec::new();
    if !persona_slot && !agent.persona.is_empty() {
        parts.push(agent.persona.clone());
    }
    if with_plan {
        if let Some(plan) = &agent.plan {
            parts.push(plan_clause(plan));
        }
    }
    parts.push(body);
    Ok(parts.join("\n"))
}

fn prompt_payload(ctx: &RunCtx, request: &ChatRequest, extra: Value) -> Value {
    let mut payload = match ctx.journal.detail {
        JournalDetail::Full => json!({"messages": request.messages}),
        JournalDetail::Digest => json!({"chars": request.char_len()}),
    };
    merge(&mut payload, extra);
    payload
}

fn merge(target: &mut Value, extra: Value) {
    if let (Some(t), Value::Object(e)) = (target.as_object_mut(), extra) {
        t.extend(e);
    }
}

/// Journals the prompt, calls the provider and journals the response (or
/// the error before propagating it).
fn exchange(
    ctx: &mut RunCtx,
    agent_id: &str,
    request: &ChatRequest,
    meta: Value,
) -> Result<ChatResponse, RuntimeError> {
    let digest = request.cache_key();
    let payload = prompt_payload(ctx, request, meta.clone());
    ctx.record(EventKind::Prompt, Some(agent_id), payload, Some(digest))?;
    match ctx.complete(request) {
        Ok(response) => {
            let mut payload = json!({"content": response.content, "finish_reason": response.finish_reason});
            merge(&mut payload, meta);
            ctx.record(EventKind::Response, Some(agent_id), payload, Some(digest))?;
            Ok(response)
        }
        Err(err) => {
            let mut payload = json!({"error": err.to_string()});
            merge(&mut payload, meta);
            ctx.record(EventKind::Response, Some(agent_id), payload, Some(digest))?;
            Err(err)
        }
    }
}

/// Prompts `agent` with `template` for `stage` and parses the reply. A reply
/// that does not parse is retried once with a format reminder; if that also
/// fails the action is returned with `conforming = false`.
pub fn act(
    ctx: &mut RunCtx,
    agent: &AgentState,
    stage: &str,
    template: &PromptTemplate,
    bindings: &Bindings,
    parser: &ParserSpec,
) -> Result<Decision, RuntimeError> {
    let user = compose(agent, template, bindings, true)?;
    let mut messages = vec![
        Message::system(ctx.system_message(stage, &agent.system)),
        Message::user(user.clone()),
    ];
    let request = ChatRequest::new(agent.settings.clone(), messages.clone())?;
    let response = exchange(ctx, &agent.agent_id, &request, json!({"purpose": "act", "attempt": 0}))?;
    let mut action = parser.parse(&response.content);
    let mut retried = false;
    let mut last_key = request.cache_key();
    if !action.conforming {
        retried = true;
        messages.push(Message::assistant(response.content));
        messages.push(Message::user(parser.reminder()));
        let retry = ChatRequest::new(agent.settings.clone(), messages)?;
        let response = exchange(ctx, &agent.agent_id, &retry, json!({"purpose": "act", "attempt": 1}))?;
        action = parser.parse(&response.content);
        last_key = retry.cache_key();
    }
    let payload = json!({
        "raw": action.raw,
        "value": action.value,
        "conforming": action.conforming,
        "retried": retried,
    });
    let seq = ctx.record(EventKind::Parsed, Some(&agent.agent_id), payload, Some(last_key))?;
    Ok(Decision {
        action,
        seq,
        prompt: user,
        retried,
    })
}

/// Asks the agent for a strategy and stores the reply as its plan. An empty
/// reply keeps the previous plan.
pub fn reflect(
    ctx: &mut RunCtx,
    agent: &AgentState,
    stage: &str,
    template: &PromptTemplate,
    evidence: &Bindings,
) -> Result<AgentState, RuntimeError> {
    let user = compose(agent, template, evidence, false)?;
    let messages = vec![
        Message::system(ctx.system_message(stage, &agent.system)),
        Message::user(user),
    ];
    let request = ChatRequest::new(agent.settings.clone(), messages)?;
    let response = exchange(ctx, &agent.agent_id, &request, json!({"purpose": "reflect"}))?;
    let plan = response.content.trim();
    let mut next = agent.clone();
    if !plan.is_empty() {
        next.plan = Some(plan.to_string());
        ctx.world(Some(&agent.agent_id), json!({"plan": plan}))?;
    }
    Ok(next)
}

/// Asks the agent why it made the decision journaled as `decision_seq`.
/// The agent is not modified.
pub fn explain(
    ctx: &mut RunCtx,
    agent: &AgentState,
    decision_seq: u64,
    stage: &str,
    template: &PromptTemplate,
    bindings: &Bindings,
) -> Result<String, RuntimeError> {
    let user = compose(agent, template, bindings, false)?;
    let messages = vec![
        Message::system(ctx.system_message(stage, &agent.system)),
        Message::user(user),
    ];
    let request = ChatRequest::new(agent.settings.clone(), messages)?;
    let meta = json!({"purpose": "explain", "explains": decision_seq});
    let response = exchange(ctx, &agent.agent_id, &request, meta)?;
    Ok(response.content.trim().to_string())
}
