use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, ChatMessage, ChatRequest, ChatResult, ChatRole, FinishReason, GatewayError,
    ToolCall,
};
use crate::domain::TelemetryRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleContains {
    pub role: ChatRole,
    pub text: String,
}

/// Predicate over a request. Every present condition must hold; an empty
/// matcher matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    /// The last message with `role` contains `text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_contains: Option<RoleContains>,
    /// The request holds exactly this many user messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
    /// Some message content contains this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substring: Option<String>,
}

impl Matcher {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn substring(text: impl Into<String>) -> Self {
        Self {
            substring: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn turn(index: usize) -> Self {
        Self {
            turn_index: Some(index),
            ..Self::default()
        }
    }

    pub fn role_contains(role: ChatRole, text: impl Into<String>) -> Self {
        Self {
            role_contains: Some(RoleContains {
                role,
                text: text.into(),
            }),
            ..Self::default()
        }
    }

    pub fn matches(&self, request: &ChatRequest) -> bool {
        if let Some(rc) = &self.role_contains {
            let last = request.messages.iter().rev().find(|m| m.role == rc.role);
            if !last.is_some_and(|m| m.content.contains(&rc.text)) {
                return false;
            }
        }
        if let Some(n) = self.turn_index {
            let users = request
                .messages
                .iter()
                .filter(|m| m.role == ChatRole::User)
                .count();
            if users != n {
                return false;
            }
        }
        if let Some(s) = &self.substring {
            if !request
                .messages
                .iter()
                .any(|m| m.content.contains(s.as_str()))
            {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaybookEntry {
    pub matcher: Matcher,
    pub result: ChatResult,
}

/// Ordered canned answers; the first matching entry wins.
///
/// Matching is a pure function of the request, so one playbook can serve
/// any number of concurrent conversations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedPlaybook {
    pub entries: Vec<PlaybookEntry>,
    pub default_result: Option<ChatResult>,
}

impl ScriptedPlaybook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(mut self, matcher: Matcher, result: ChatResult) -> Self {
        self.entries.push(PlaybookEntry { matcher, result });
        self
    }

    pub fn reply(self, matcher: Matcher, content: &str) -> Self {
        self.on(
            matcher,
            ChatResult::text(content, TelemetryRecord::default()),
        )
    }

    pub fn with_default(mut self, result: ChatResult) -> Self {
        self.default_result = Some(result);
        self
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<&ChatResult> {
        self.entries
            .iter()
            .find(|e| e.matcher.matches(request))
            .map(|e| &e.result)
            .or(self.default_result.as_ref())
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let entries: Vec<FileEntry> = serde_json::from_str(text)
            .map_err(|e| GatewayError::Decode(format!("playbook: {e}")))?;
        Ok(Self {
            entries: entries.into_iter().map(FileEntry::into_entry).collect(),
            default_result: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Deserialize)]
struct FileEntry {
    #[serde(rename = "match", default)]
    matcher: Matcher,
    response: FileResponse,
}

#[derive(Deserialize)]
struct FileResponse {
    #[serde(default)]
    content: String,
    #[serde(default)]
    tool_calls: Vec<FileToolCall>,
    #[serde(default)]
    finish_reason: Option<FinishReason>,
    #[serde(default)]
    usage: FileUsage,
    #[serde(default)]
    latency_ms: u64,
}

#[derive(Deserialize, Default)]
struct FileUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct FileToolCall {
    #[serde(default)]
    id: Option<String>,
    name: String,
    #[serde(default)]
    arguments: serde_json::Value,
}

impl FileEntry {
    fn into_entry(self) -> PlaybookEntry {
        let r = self.response;
        let tool_calls: Vec<ToolCall> = r
            .tool_calls
            .into_iter()
            .enumerate()
            .map(|(i, c)| ToolCall {
                id: c.id.unwrap_or_else(|| format!("call_{i}")),
                name: c.name,
                arguments: match c.arguments {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => "{}".into(),
                    other => other.to_string(),
                },
            })
            .collect();
        let finish_reason = r.finish_reason.unwrap_or(if tool_calls.is_empty() {
            FinishReason::Stop
        } else {
            FinishReason::ToolCall
        });
        PlaybookEntry {
            matcher: self.matcher,
            result: ChatResult {
                message: ChatMessage {
                    role: ChatRole::Assistant,
                    content: r.content,
                    tool_calls,
                    tool_call_id: None,
                },
                telemetry: TelemetryRecord {
                    prompt_tokens: r.usage.prompt_tokens,
                    completion_tokens: r.usage.completion_tokens,
                    latency_ms: r.latency_ms,
                },
                finish_reason,
            },
        }
    }
}

/// Deterministic backend answering from a playbook.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    playbook: Arc<ScriptedPlaybook>,
}

impl ScriptedBackend {
    pub fn new(playbook: ScriptedPlaybook) -> Self {
        Self {
            playbook: Arc::new(playbook),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        self.playbook
            .lookup(request)
            .cloned()
            .ok_or(GatewayError::PlaybookExhausted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(msgs: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: "scripted".into(),
            messages: msgs,
            tools: vec![],
            temperature: 0.0,
        }
    }

    #[test]
    fn first_matching_entry_wins() {
        let pb = ScriptedPlaybook::new()
            .reply(Matcher::substring("fries"), "fries answer")
            .reply(Matcher::turn(1), "turn one")
            .with_default(ChatResult::text("default", TelemetryRecord::default()));
        let b = ScriptedBackend::new(pb);
        let r1 = request(vec![
            ChatMessage::system("s"),
            ChatMessage::user("I want fries"),
        ]);
        let r2 = request(vec![ChatMessage::system("s"), ChatMessage::user("burger")]);
        let r3 = request(vec![
            ChatMessage::system("s"),
            ChatMessage::user("a"),
            ChatMessage::user("b"),
        ]);
        assert_eq!(b.complete(&r1).unwrap().message.content, "fries answer");
        assert_eq!(b.complete(&r2).unwrap().message.content, "turn one");
        assert_eq!(b.complete(&r3).unwrap().message.content, "default");
    }

    #[test]
    fn replay_is_identical() {
        let pb = ScriptedPlaybook::new().reply(Matcher::any(), "same");
        let b = ScriptedBackend::new(pb);
        let r = request(vec![ChatMessage::system("s"), ChatMessage::user("x")]);
        let first: Vec<_> = (0..3).map(|_| b.complete(&r).unwrap()).collect();
        let second: Vec<_> = (0..3).map(|_| b.complete(&r).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn exhausted_without_default() {
        let b = ScriptedBackend::new(ScriptedPlaybook::new().reply(Matcher::substring("zzz"), "x"));
        let r = request(vec![ChatMessage::system("s"), ChatMessage::user("x")]);
        assert!(matches!(
            b.complete(&r),
            Err(GatewayError::PlaybookExhausted)
        ));
    }

    #[test]
    fn role_contains_checks_last_message_of_role() {
        let m = Matcher::role_contains(ChatRole::User, "second");
        let r = request(vec![
            ChatMessage::system("s"),
            ChatMessage::user("second"),
            ChatMessage::user("third"),
        ]);
        assert!(!m.matches(&r));
    }

    #[test]
    fn file_format_with_telemetry_round_trip() {
        let pb = ScriptedPlaybook::from_json(
            r#"[
              {"match": {"substring": "burger"},
               "response": {"content": "ok", "usage": {"prompt_tokens": 120, "completion_tokens": 30}, "latency_ms": 0}},
              {"match": {},
               "response": {"tool_calls": [{"name": "add_item", "arguments": {"item": "fries", "quantity": 1}}]}}
            ]"#,
        )
        .unwrap();
        let b = ScriptedBackend::new(pb);
        let r = request(vec![ChatMessage::system("s"), ChatMessage::user("burger")]);
        let out = b.complete(&r).unwrap();
        assert_eq!(
            out.telemetry,
            TelemetryRecord {
                prompt_tokens: 120,
                completion_tokens: 30,
                latency_ms: 0
            }
        );
        let r = request(vec![ChatMessage::system("s"), ChatMessage::user("other")]);
        let out = b.complete(&r).unwrap();
        assert_eq!(out.finish_reason, FinishReason::ToolCall);
        assert_eq!(
            out.message.tool_calls[0].arguments,
            r#"{"item":"fries","quantity":1}"#
        );
    }
}
