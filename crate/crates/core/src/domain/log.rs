use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::attributes::MessageAttributes;
use super::config::ConfigId;
use super::item::TaskState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Counterpart,
    Guest,
}

/// Token and latency cost of one or more model calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl TelemetryRecord {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TelemetryRecord {
    type Output = TelemetryRecord;

    fn add(self, rhs: Self) -> Self::Output {
        TelemetryRecord {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            latency_ms: self.latency_ms + rhs.latency_ms,
        }
    }
}

impl AddAssign for TelemetryRecord {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// One tool invocation made while producing a guest message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub tool_name: String,
    pub arguments_digest: String,
    pub result_digest: String,
    pub wall_time_ms: u64,
}

impl ToolCallRecord {
    pub fn new(tool_name: &str, arguments: &str, result: &str, wall_time_ms: u64) -> Self {
        Self {
            tool_name: tool_name.to_owned(),
            arguments_digest: digest(arguments),
            result_digest: digest(result),
            wall_time_ms,
        }
    }
}

/// First 16 hex characters of the SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: u32,
    pub role: Role,
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRecord>,
    /// Step names executed for this turn, in order, ending with `respond`.
    #[serde(default)]
    pub protocol_trace: Vec<String>,
    #[serde(default)]
    pub attributes_snapshot: Option<MessageAttributes>,
    #[serde(default)]
    pub state_snapshot: Option<TaskState>,
    /// Order state reconstructed by the evaluation tracker for
    /// configurations whose guest has no state tracker. Never shown to the
    /// guest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_state: Option<TaskState>,
    pub telemetry: TelemetryRecord,
}

impl TurnRecord {
    /// The state used to judge completion for this turn.
    pub fn judged_state(&self) -> Option<&TaskState> {
        self.state_snapshot.as_ref().or(self.audit_state.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    TurnLimit,
    RepetitionAbort,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationLog {
    pub test_case_id: String,
    pub persona_id: String,
    pub config_id: ConfigId,
    pub turns: Vec<TurnRecord>,
    pub final_state: TaskState,
    pub outcome: Outcome,
    /// Deviations and errors worth surfacing next to the metrics.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ConversationLog {
    pub fn guest_turns(&self) -> impl Iterator<Item = &TurnRecord> {
        self.turns.iter().filter(|t| t.role == Role::Guest)
    }
}
