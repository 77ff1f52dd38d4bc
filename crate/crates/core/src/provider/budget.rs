use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, ProviderError};

/// Ceiling on total calls and total tokens for one live backend.
#[derive(Debug, Serialize, Deserialize)]
pub struct Budget {
    pub max_calls: u64,
    pub max_tokens: u64,
    #[serde(skip)]
    calls: AtomicU64,
    #[serde(skip)]
    tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetUsage {
    pub calls: u64,
    pub tokens: u64,
}

impl Budget {
    pub fn new(max_calls: u64, max_tokens: u64) -> Self {
        Self {
            max_calls,
            max_tokens,
            calls: AtomicU64::new(0),
            tokens: AtomicU64::new(0),
        }
    }

    /// Reserves one call slot, failing once either ceiling has been reached.
    pub fn reserve(&self) -> Result<(), ProviderError> {
        if self.tokens.load(Ordering::SeqCst) >= self.max_tokens {
            return Err(ProviderError::BudgetExceeded(format!(
                "token ceiling {} reached",
                self.max_tokens
            )));
        }
        let previous = self.calls.fetch_add(1, Ordering::SeqCst);
        if previous >= self.max_calls {
            self.calls.fetch_sub(1, Ordering::SeqCst);
            return Err(ProviderError::BudgetExceeded(format!(
                "call ceiling {} reached",
                self.max_calls
            )));
        }
        Ok(())
    }

    /// Charges the tokens used by a completed call. Without reported usage the
    /// charge is estimated at four characters per token.
    pub fn charge(&self, request: &ChatRequest, response: &ChatResponse) {
        let tokens = match response.usage {
            Some(u) => u.prompt_tokens + u.completion_tokens,
            None => ((request.char_len() + response.content.chars().count()) as u64).div_ceil(4),
        };
        self.tokens.fetch_add(tokens, Ordering::SeqCst);
    }

    pub fn usage(&self) -> BudgetUsage {
        BudgetUsage {
            calls: self.calls.load(Ordering::SeqCst),
            tokens: self.tokens.load(Ordering::SeqCst),
        }
    }
}
