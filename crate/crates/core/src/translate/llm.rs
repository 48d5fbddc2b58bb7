//! OpenAI-compatible chat-completions client.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("endpoint returned HTTP {status}")]
    Endpoint { status: u16 },
    #[error("rate limited")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// A chat model that answers one user message.
pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, LlmError>;
}

impl<F> ChatModel for F
where
    F: Fn(&str, f64) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, LlmError> {
        self(prompt, temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Calls the model, retrying rate-limit responses with exponential backoff.
pub fn complete_with_retry(
    model: &dyn ChatModel,
    prompt: &str,
    temperature: f64,
    policy: RetryPolicy,
) -> Result<String, LlmError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match model.complete(prompt, temperature) {
            Err(LlmError::RateLimited) if attempt < policy.max_attempts => {
                thread::sleep(policy.base_delay * 2u32.pow(attempt - 1));
            }
            other => return other,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OpenAiChat {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiChat {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        OpenAiChat {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

impl ChatModel for OpenAiChat {
    fn complete(&self, prompt: &str, temperature: f64) -> Result<String, LlmError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = ChatRequest {
            model: &self.model,
            temperature,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Status(429, _) => LlmError::RateLimited,
            ureq::Error::Status(status, _) => LlmError::Endpoint { status },
            other => LlmError::Transport(other.to_string()),
        })?;
        let parsed: ChatResponse = resp
            .into_json()
            .map_err(|e| LlmError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("no message content in first choice".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn retries_rate_limits_up_to_limit() {
        let calls = AtomicU32::new(0);
        let model = |_: &str, _: f64| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(LlmError::RateLimited)
        };
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::ZERO,
        };
        assert_eq!(complete_with_retry(&model, "p", 0.5, policy), Err(LlmError::RateLimited));
        assert_eq!(calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn recovers_after_rate_limit() {
        let calls = AtomicU32::new(0);
        let model = |_: &str, _: f64| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(LlmError::RateLimited)
            } else {
                Ok("done".to_string())
            }
        };
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::ZERO,
        };
        assert_eq!(complete_with_retry(&model, "p", 0.5, policy).unwrap(), "done");
    }

    #[test]
    fn other_errors_are_not_retried() {
        let calls = AtomicU32::new(0);
        let model = |_: &str, _: f64| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(LlmError::Endpoint { status: 500 })
        };
        let _ = complete_with_retry(&model, "p", 0.5, RetryPolicy::default());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
