//! Shared data model: task items and states, behavioral attributes,
//! scenario content and conversation logs.

mod attributes;
mod config;
mod item;
mod log;
mod scenario;

pub use attributes::{
    CompletionStatus, ExecutionStyle, ExpectedAttributes, ExplorationStyle, MessageAttributes,
    MoodTone, ParseAttributeError,
};
pub use config::{ConfigId, ExplainabilityTier};
pub use item::{
    items_match, normalize_item, ItemKey, MatchRules, NormalizedText, Normalizer, QuantityMode,
    TaskItem, TaskState, DEFAULT_FILLERS,
};
pub use log::{
    digest, ConversationLog, Outcome, Role, TelemetryRecord, ToolCallRecord, TurnRecord,
};
pub use scenario::{validate_test_case, Complexity, Menu, MenuItem, Persona, TestCase};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("task item text is empty")]
    EmptyItemText,
    #[error("task item `{0}` has quantity 0")]
    ZeroQuantity(String),
    #[error("test case `{test_case}`: unknown persona `{persona_id}` in field persona_id")]
    UnknownPersona {
        test_case: String,
        persona_id: String,
    },
    #[error("test case `{test_case}`: target item `{item}` is not on the menu (field target)")]
    OffMenuItem { test_case: String, item: String },
    #[error("test case `{0}` has an empty target")]
    EmptyTarget(String),
    #[error("persona `{0}` has an empty biography")]
    EmptyBiography(String),
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("invalid configuration id {0}, expected 1..=5")]
    InvalidConfig(u8),
}
