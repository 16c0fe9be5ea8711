//! Chat-completion interface with a remote OpenAI-compatible backend and a
//! deterministic scripted backend.

mod remote;
mod scripted;

pub use remote::{RemoteBackend, RemoteSettings, RetryPolicy};
pub use scripted::{Matcher, PlaybookEntry, RoleContains, ScriptedBackend, ScriptedPlaybook};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ConversationLog, TelemetryRecord};

/// Temperature for free-form simulation calls.
pub const SIMULATION_TEMPERATURE: f64 = 0.7;
/// Temperature for extraction-style calls.
pub const EXTRACTION_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("scripted playbook has no entry matching the request and no default")]
    PlaybookExhausted,
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("telemetry aggregation needs at least one guest response")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// JSON-encoded arguments object.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: ChatRole, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(ChatRole::Assistant, content)
    }

    pub fn tool_calls(calls: Vec<ToolCall>) -> Self {
        Self {
            role: ChatRole::Assistant,
            content: String::new(),
            tool_calls: calls,
            tool_call_id: None,
        }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.content.is_empty() || !self.tool_calls.is_empty()
    }
}

/// Function tool offered to the model; `parameters` is a JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub tools: Vec<ToolSchema>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("no messages".into()))?;
        if first.role != ChatRole::System {
            return Err(GatewayError::InvalidRequest(
                "first message must be a system message".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if let Some(i) = self.messages.iter().position(|m| !m.is_well_formed()) {
            return Err(GatewayError::InvalidRequest(format!(
                "message {i} has neither content nor tool calls"
            )));
        }
        Ok(())
    }

    /// Rough token count of the request: a quarter token per character.
    pub fn estimated_prompt_tokens(&self) -> u64 {
        let mut chars = 0usize;
        for m in &self.messages {
            chars += m.content.chars().count();
            chars += m
                .tool_calls
                .iter()
                .map(|c| c.name.len() + c.arguments.len())
                .sum::<usize>();
        }
        for t in &self.tools {
            chars += t.name.len() + t.description.len() + t.parameters.to_string().len();
        }
        estimate_tokens_for(chars)
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    estimate_tokens_for(text.chars().count())
}

fn estimate_tokens_for(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

/// Telemetry for a locally answered request: estimated tokens, zero latency.
pub fn estimated_telemetry(request: &ChatRequest, reply: &str) -> TelemetryRecord {
    TelemetryRecord {
        prompt_tokens: request.estimated_prompt_tokens(),
        completion_tokens: estimate_tokens(reply),
        latency_ms: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    ToolCall,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResult {
    pub message: ChatMessage,
    pub telemetry: TelemetryRecord,
    pub finish_reason: FinishReason,
}

impl ChatResult {
    pub fn text(content: impl Into<String>, telemetry: TelemetryRecord) -> Self {
        Self {
            message: ChatMessage::assistant(content),
            telemetry,
            finish_reason: FinishReason::Stop,
        }
    }
}

/// Anything that answers chat requests.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError>;
}

/// Validates the request, then forwards it to the backend.
pub fn complete(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
) -> Result<ChatResult, GatewayError> {
    request.validate()?;
    backend.complete(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub avg_tokens_per_response: f64,
    pub avg_latency_seconds: f64,
    pub responses: usize,
}

/// Mean tokens and latency per guest response across `logs`.
pub fn aggregate_telemetry(logs: &[ConversationLog]) -> Result<TelemetrySummary, GatewayError> {
    let mut tokens = 0u128;
    let mut latency_ms = 0u128;
    let mut responses = 0usize;
    for turn in logs.iter().flat_map(|l| l.guest_turns()) {
        tokens += u128::from(turn.telemetry.total_tokens());
        latency_ms += u128::from(turn.telemetry.latency_ms);
        responses += 1;
    }
    if responses == 0 {
        return Err(GatewayError::EmptyInput);
    }
    let n = responses as f64;
    Ok(TelemetrySummary {
        avg_tokens_per_response: tokens as f64 / n,
        avg_latency_seconds: latency_ms as f64 / 1000.0 / n,
        responses,
    })
}
