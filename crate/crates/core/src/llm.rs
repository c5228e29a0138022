//! Chat-completion models: the OpenAI-compatible HTTP client and in-process
//! stand-ins for offline runs.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Decoding parameters shared by generation and optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(alias = "top_k_sampling")]
    pub top_k: u32,
    pub max_new_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.8, top_p: 0.9, top_k: 50, max_new_tokens: 8192 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub sampling: Sampling,
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn user(prompt: impl Into<String>, sampling: Sampling, seed: Option<u64>) -> Self {
        Self { messages: vec![ChatMessage { role: "user".into(), content: prompt.into() }], sampling, seed }
    }

    /// Content of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map_or("", |m| m.content.as_str())
    }
}

pub trait ChatModel: Send + Sync {
    fn model_id(&self) -> &str;

    /// Returns the text of the first completion choice.
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    /// Full URL of the chat-completions route, e.g. `http://host:8000/v1/chat/completions`.
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Also send `top_k`; servers such as vLLM accept it, the OpenAI API does not.
    #[serde(default)]
    pub send_top_k: bool,
}

fn default_timeout() -> u64 {
    300
}

pub struct HttpChatModel {
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatModel {
    pub fn new(config: HttpChatConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl ChatModel for HttpChatModel {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let body = WireRequest {
            model: &self.config.model,
            messages: &request.messages,
            temperature: request.sampling.temperature,
            top_p: request.sampling.top_p,
            max_tokens: request.sampling.max_new_tokens,
            seed: request.seed,
            top_k: self.config.send_top_k.then_some(request.sampling.top_k),
        };
        let mut req = self.client.post(&self.config.url).json(&body);
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Error::ProviderError(format!("chat endpoint returned {status}: {text}")));
        }
        let parsed: WireResponse =
            resp.json().map_err(|e| Error::ProviderError(format!("unreadable chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::ProviderError("response has no message content".into()))
    }
}

/// Replays canned replies in call order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Mutex<VecDeque<String>>,
    cycle: Option<Vec<String>>,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    /// Errors with `ProviderError` once the script runs out.
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self { replies: Mutex::new(replies.into_iter().map(Into::into).collect()), ..Default::default() }
    }

    /// Repeats the script forever.
    pub fn cycling<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let all: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!all.is_empty(), "cycling script needs at least one reply");
        Self { replies: Mutex::new(all.iter().cloned().collect()), cycle: Some(all), ..Default::default() }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }
}

impl ChatModel for ScriptedChat {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        self.calls.lock().unwrap().push(request.clone());
        let mut replies = self.replies.lock().unwrap();
        if replies.is_empty() {
            if let Some(all) = &self.cycle {
                replies.extend(all.iter().cloned());
            }
        }
        replies.pop_front().ok_or_else(|| Error::ProviderError("scripted replies exhausted".into()))
    }
}

/// Chat model backed by a closure; handy when replies must depend on the
/// request (seed, prompt) rather than on call order.
pub struct FnChat<F>(pub F);

impl<F> ChatModel for FnChat<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    fn model_id(&self) -> &str {
        "fn"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        (self.0)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_then_exhausts() {
        let chat = ScriptedChat::new(["one", "two"]);
        let req = ChatRequest::user("hi", Sampling::default(), Some(1));
        assert_eq!(chat.complete(&req).unwrap(), "one");
        assert_eq!(chat.complete(&req).unwrap(), "two");
        assert!(matches!(chat.complete(&req), Err(Error::ProviderError(_))));
        assert_eq!(chat.calls().len(), 3);
    }

    #[test]
    fn cycling_wraps() {
        let chat = ScriptedChat::cycling(["x"]);
        let req = ChatRequest::user("hi", Sampling::default(), None);
        for _ in 0..3 {
            assert_eq!(chat.complete(&req).unwrap(), "x");
        }
    }

    #[test]
    fn sampling_defaults() {
        let s = Sampling::default();
        assert_eq!((s.temperature, s.top_p, s.top_k, s.max_new_tokens), (0.8, 0.9, 50, 8192));
    }
}
