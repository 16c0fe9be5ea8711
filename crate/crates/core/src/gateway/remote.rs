use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{
    ChatBackend, ChatMessage, ChatRequest, ChatResult, ChatRole, FinishReason, GatewayError,
    ToolCall,
};
use crate::domain::TelemetryRecord;

const DEFAULT_BASE_URL: &str = "https://api.openai.com";
const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, failed_attempt: u32) -> Duration {
        self.initial_backoff * 2u32.pow(failed_attempt.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteSettings {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteSettings {
    /// Reads `SIM_API_KEY`, `SIM_BASE_URL` and `SIM_MODEL`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let api_key = std::env::var("SIM_API_KEY")
            .map_err(|_| GatewayError::Config("SIM_API_KEY is not set".into()))?;
        Ok(Self {
            base_url: std::env::var("SIM_BASE_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.into()),
            api_key,
            model: std::env::var("SIM_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.into()),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        })
    }

    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

/// Backend speaking the OpenAI-compatible chat-completions protocol.
pub struct RemoteBackend {
    settings: RemoteSettings,
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(settings: RemoteSettings) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let endpoint = format!(
            "{}/v1/chat/completions",
            settings.base_url.trim_end_matches('/')
        );
        Ok(Self {
            settings,
            endpoint,
            client,
        })
    }

    pub fn model(&self) -> &str {
        &self.settings.model
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        let body = wire_request(request, &self.settings.model);
        let retry = self.settings.retry;
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let sent = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.settings.api_key)
                .json(&body)
                .send();
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    if attempt < retry.attempts {
                        warn!(attempt, error = %e, "transport failure, retrying");
                        std::thread::sleep(retry.backoff(attempt));
                        continue;
                    }
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    });
                }
            };
            let status = response.status();
            let text = response.text().map_err(|e| GatewayError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })?;
            if status.is_success() {
                let latency_ms = started.elapsed().as_millis() as u64;
                debug!(attempt, latency_ms, "completion received");
                return parse_response(&text, latency_ms);
            }
            let retryable = status.as_u16() == 429 || status.is_server_error();
            if retryable && attempt < retry.attempts {
                warn!(
                    attempt,
                    status = status.as_u16(),
                    "retryable provider status"
                );
                std::thread::sleep(retry.backoff(attempt));
                continue;
            }
            return Err(GatewayError::Provider {
                status: status.as_u16(),
                body: text,
            });
        }
    }
}

fn wire_role(role: ChatRole) -> &'static str {
    match role {
        ChatRole::System => "system",
        ChatRole::User => "user",
        ChatRole::Assistant => "assistant",
        ChatRole::Tool => "tool",
    }
}

/// Request body; an empty model on the request falls back to the configured one.
pub(crate) fn wire_request(request: &ChatRequest, default_model: &str) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let mut obj = json!({ "role": wire_role(m.role), "content": m.content });
            if !m.tool_calls.is_empty() {
                obj["tool_calls"] = m
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.id,
                            "type": "function",
                            "function": { "name": c.name, "arguments": c.arguments },
                        })
                    })
                    .collect();
            }
            if let Some(id) = &m.tool_call_id {
                obj["tool_call_id"] = json!(id);
            }
            obj
        })
        .collect();
    let model = if request.model.is_empty() {
        default_model
    } else {
        &request.model
    };
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": request.temperature,
    });
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    },
                })
            })
            .collect();
    }
    body
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
    #[serde(default)]
    tool_calls: Vec<WireToolCall>,
}

#[derive(Deserialize, Serialize)]
struct WireToolCall {
    #[serde(default)]
    id: String,
    function: WireFunction,
}

#[derive(Deserialize, Serialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(crate) fn parse_response(body: &str, latency_ms: u64) -> Result<ChatResult, GatewayError> {
    let parsed: WireResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::Decode(format!("{e}: {body}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Decode("response has no choices".into()))?;
    let usage = parsed.usage.unwrap_or(WireUsage {
        prompt_tokens: 0,
        completion_tokens: 0,
    });
    let tool_calls: Vec<ToolCall> = choice
        .message
        .tool_calls
        .into_iter()
        .map(|c| ToolCall {
            id: c.id,
            name: c.function.name,
            arguments: c.function.arguments,
        })
        .collect();
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("tool_calls") | Some("function_call") => FinishReason::ToolCall,
        Some("length") => FinishReason::Length,
        Some("stop") | None => {
            if tool_calls.is_empty() {
                FinishReason::Stop
            } else {
                FinishReason::ToolCall
            }
        }
        Some(_) => FinishReason::Error,
    };
    Ok(ChatResult {
        message: ChatMessage {
            role: ChatRole::Assistant,
            content: choice.message.content.unwrap_or_default(),
            tool_calls,
            tool_call_id: None,
        },
        telemetry: TelemetryRecord {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            latency_ms,
        },
        finish_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ToolSchema;

    #[test]
    fn request_body_uses_wire_field_names() {
        let req = ChatRequest {
            model: String::new(),
            messages: vec![
                ChatMessage::system("sys"),
                ChatMessage::tool_calls(vec![ToolCall {
                    id: "c1".into(),
                    name: "add_item".into(),
                    arguments: r#"{"item":"fries"}"#.into(),
                }]),
                ChatMessage::tool_result("c1", "ok"),
            ],
            tools: vec![ToolSchema {
                name: "add_item".into(),
                description: "Add".into(),
                parameters: json!({"type": "object"}),
            }],
            temperature: 0.0,
        };
        let body = wire_request(&req, "gpt-4o");
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(
            body["messages"][1]["tool_calls"][0]["function"]["name"],
            "add_item"
        );
        assert_eq!(body["messages"][2]["tool_call_id"], "c1");
        assert_eq!(body["tools"][0]["type"], "function");
    }

    #[test]
    fn parses_usage_and_tool_calls() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":null,
            "tool_calls":[{"id":"x","type":"function","function":{"name":"clear_items","arguments":"{}"}}]},
            "finish_reason":"tool_calls"}],"usage":{"prompt_tokens":120,"completion_tokens":30}}"#;
        let r = parse_response(body, 42).unwrap();
        assert_eq!(r.finish_reason, FinishReason::ToolCall);
        assert_eq!(r.message.tool_calls[0].name, "clear_items");
        assert_eq!(
            r.telemetry,
            TelemetryRecord {
                prompt_tokens: 120,
                completion_tokens: 30,
                latency_ms: 42
            }
        );
    }

    #[test]
    fn rejects_empty_choices() {
        assert!(matches!(
            parse_response(r#"{"choices":[]}"#, 0),
            Err(GatewayError::Decode(_))
        ));
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_millis(500));
        assert_eq!(p.backoff(2), Duration::from_millis(1000));
    }
}
