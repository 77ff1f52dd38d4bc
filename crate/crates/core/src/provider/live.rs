//! OpenAI-compatible chat completions over HTTP.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Budget, ChatRequest, ChatResponse, FinishReason, Provider, ProviderError, Usage};

pub const API_KEY_ENV: &str = "SABM_API_KEY";
pub const API_BASE_ENV: &str = "SABM_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub attempts: u32,
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Reads the credential and base URL from the environment. A missing or
    /// empty credential is an [`ProviderError::Auth`] error.
    pub fn from_env() -> Result<Self, ProviderError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::Auth(format!("{API_KEY_ENV} is not set")))?;
        let base_url = std::env::var(API_BASE_ENV)
            .ok()
            .filter(|b| !b.trim().is_empty())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base_url, api_key))
    }

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            attempts: 3,
            base_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    budget: Budget,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(ChatResponse),
    Retry(ProviderError),
    Fail(ProviderError),
}

impl LiveProvider {
    /// The budget is mandatory: every live backend has call and token ceilings.
    pub fn new(config: LiveConfig, budget: Budget) -> Result<Self, ProviderError> {
        if config.api_key.trim().is_empty() {
            return Err(ProviderError::Auth(format!("{API_KEY_ENV} is not set")));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, budget, client })
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let body = json!({
            "model": request.settings.model_type,
            "messages": request.messages,
            "temperature": request.settings.temperature,
            "max_tokens": request.settings.max_tokens,
        });
        let sent = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send();
        let response = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(ProviderError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        match status {
            200..=299 => match parse_wire(&text) {
                Ok(r) => Attempt::Done(r),
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(ProviderError::Auth(format!("http {status}"))),
            500.. => Attempt::Retry(ProviderError::Http { status, body: text }),
            _ => Attempt::Fail(ProviderError::Http { status, body: text }),
        }
    }
}

fn parse_wire(text: &str) -> Result<ChatResponse, ProviderError> {
    let wire: WireResponse =
        serde_json::from_str(text).map_err(|e| ProviderError::Transport(format!("malformed response body: {e}")))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::Transport("response has no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Stop,
    };
    let content = choice.message.content.unwrap_or_default();
    Ok(ChatResponse {
        content,
        finish_reason,
        usage: wire.usage.map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        }),
    })
}

impl Provider for LiveProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        self.budget.reserve()?;
        let attempts = self.config.attempts.max(1);
        let mut last = ProviderError::Transport("no attempt made".into());
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.config.base_delay * 2u32.pow(i - 1));
            }
            match self.attempt(request) {
                Attempt::Done(response) => {
                    self.budget.charge(request, &response);
                    return Ok(response);
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => last = e,
            }
        }
        Err(match last {
            ProviderError::Http { status, body } => {
                ProviderError::Transport(format!("http {status} after {attempts} attempts: {body}"))
            }
            ProviderError::Transport(msg) => ProviderError::Transport(format!("{msg} (after {attempts} attempts)")),
            other => other,
        })
    }
}
