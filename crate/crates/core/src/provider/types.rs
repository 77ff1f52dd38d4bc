use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model_type: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmSettings {
    pub fn new(model_type: impl Into<String>, temperature: f64, max_tokens: u32) -> Result<Self, ProviderError> {
        let settings = Self {
            model_type: model_type.into(),
            temperature,
            max_tokens,
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if self.model_type.is_empty() {
            return Err(ProviderError::InvalidRequest("model_type is empty".into()));
        }
        Ok(())
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model_type: "gpt-4-0613".into(),
            temperature: 0.7,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub settings: LlmSettings,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn new(settings: LlmSettings, messages: Vec<Message>) -> Result<Self, ProviderError> {
        let request = Self { settings, messages };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        self.settings.validate()?;
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("messages are empty".into()));
        }
        Ok(())
    }

    /// Content of the first system message, if any.
    pub fn system_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    /// Content of the first user message, if any.
    pub fn first_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Content of the last user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }

    /// Rough size of the prompt in characters, used for token estimates.
    pub fn char_len(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            usage: None,
        }
    }
}

/// SHA-256 digest of the canonical form of a [`ChatRequest`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(pub [u8; 32]);

impl CacheKey {
    /// Each field is written as its UTF-8 bytes preceded by the byte length as
    /// a little-endian u64. Temperature uses the shortest round-trip decimal
    /// form, so 0.7 and 0.70000001 hash differently while equal floats agree.
    pub fn of(request: &ChatRequest) -> Self {
        let mut hasher = Sha256::new();
        let mut field = |bytes: &[u8]| {
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        };
        field(b"sabm-chat-v1");
        field(request.settings.model_type.as_bytes());
        field(format_temperature(request.settings.temperature).as_bytes());
        field(request.settings.max_tokens.to_string().as_bytes());
        field(request.messages.len().to_string().as_bytes());
        for message in &request.messages {
            field(message.role.as_str().as_bytes());
            field(message.content.as_bytes());
        }
        Self(hasher.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(text, &mut out)?;
        Ok(Self(out))
    }

    /// First eight bytes as an integer; used to seed deterministic choices.
    pub fn seed(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("8 bytes"))
    }
}

fn format_temperature(t: f64) -> String {
    // -0.0 and 0.0 compare equal and must share a key.
    if t == 0.0 {
        "0".to_string()
    } else {
        format!("{t}")
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheKey({})", self.to_hex())
    }
}

impl Serialize for CacheKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for CacheKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        CacheKey::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(temperature: f64, messages: Vec<Message>) -> ChatRequest {
        ChatRequest::new(LlmSettings::new("m", temperature, 16).unwrap(), messages).unwrap()
    }

    #[test]
    fn equal_requests_equal_keys() {
        let a = request(0.5, vec![Message::system("s"), Message::user("u")]);
        assert_eq!(a.cache_key(), a.clone().cache_key());
    }

    #[test]
    fn temperature_changes_key() {
        let msgs = vec![Message::user("u")];
        assert_ne!(request(0.5, msgs.clone()).cache_key(), request(0.7, msgs).cache_key());
    }

    #[test]
    fn message_order_changes_key() {
        let a = request(0.5, vec![Message::user("a"), Message::user("b")]);
        let b = request(0.5, vec![Message::user("b"), Message::user("a")]);
        assert_ne!(a.cache_key(), b.cache_key());
    }

    #[test]
    fn field_boundaries_are_unambiguous() {
        let a = request(0.5, vec![Message::user("ab"), Message::user("c")]);
        let b = request(0.5, vec![Message::user("a"), Message::user("bc")]);
        assert_ne!(a.cache_key(), b.cache_key());
    }

    #[test]
    fn hex_round_trip() {
        let key = request(1.0, vec![Message::user("x")]).cache_key();
        let json = serde_json::to_string(&key).unwrap();
        assert_eq!(serde_json::from_str::<CacheKey>(&json).unwrap(), key);
        assert_eq!(key.to_hex().len(), 64);
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(LlmSettings::new("m", 2.5, 1).is_err());
        assert!(LlmSettings::new("m", 1.0, 0).is_err());
        assert!(ChatRequest::new(LlmSettings::default(), vec![]).is_err());
    }
}
