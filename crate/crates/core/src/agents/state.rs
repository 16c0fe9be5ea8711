use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::prompts::{render, state_text, PromptSet};
use super::AgentError;
use crate::domain::{
    CompletionStatus, ItemKey, MatchRules, TaskItem, TaskState, TelemetryRecord, ToolCallRecord,
};
use crate::gateway::{
    self, estimated_telemetry, ChatBackend, ChatMessage, ChatRequest, ToolCall, ToolSchema,
    EXTRACTION_TEMPERATURE,
};
use crate::text::{order_events, OrderEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOpKind {
    Add,
    Remove,
    Clear,
}

/// One add, remove or clear operation. Add and remove carry an item, clear
/// never does.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStateOp")]
pub struct StateOp {
    pub kind: StateOpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<TaskItem>,
}

#[derive(Deserialize)]
struct RawStateOp {
    kind: StateOpKind,
    #[serde(default)]
    item: Option<TaskItem>,
}

impl TryFrom<RawStateOp> for StateOp {
    type Error = StateOpError;

    fn try_from(raw: RawStateOp) -> Result<Self, Self::Error> {
        match (raw.kind, raw.item) {
            (StateOpKind::Clear, None) => Ok(StateOp::clear()),
            (StateOpKind::Clear, Some(_)) => {
                Err(StateOpError::Malformed("clear carries no item".into()))
            }
            (kind, Some(item)) => Ok(StateOp {
                kind,
                item: Some(item),
            }),
            (_, None) => Err(StateOpError::Malformed(
                "add and remove need an item".into(),
            )),
        }
    }
}

impl StateOp {
    pub fn add(item: TaskItem) -> Self {
        Self {
            kind: StateOpKind::Add,
            item: Some(item),
        }
    }

    pub fn remove(item: TaskItem) -> Self {
        Self {
            kind: StateOpKind::Remove,
            item: Some(item),
        }
    }

    pub fn clear() -> Self {
        Self {
            kind: StateOpKind::Clear,
            item: None,
        }
    }

    pub fn tool_name(&self) -> &'static str {
        match self.kind {
            StateOpKind::Add => "add_item",
            StateOpKind::Remove => "remove_item",
            StateOpKind::Clear => "clear_items",
        }
    }

    /// Tool-call arguments as the model would send them.
    pub fn arguments(&self) -> String {
        match &self.item {
            Some(item) => json!({ "item": item.raw_text, "quantity": item.quantity }).to_string(),
            None => "{}".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateOpError {
    #[error("`{0}` is outside the target order")]
    OutOfBoundsAdd(TaskItem),
    #[error("`{0}` is not in the current order")]
    RemoveMissing(TaskItem),
    #[error("malformed state operation: {0}")]
    Malformed(String),
}

fn key_counts(items: &[TaskItem], rules: &MatchRules) -> BTreeMap<ItemKey, usize> {
    let mut counts = BTreeMap::new();
    for key in items.iter().filter_map(|i| rules.key(i)) {
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Applies one operation. Rejected operations leave the state as it was.
pub fn apply_state_op(
    state: &TaskState,
    op: &StateOp,
    strict: bool,
    rules: &MatchRules,
) -> Result<TaskState, StateOpError> {
    let mut current = state.current().to_vec();
    match (op.kind, &op.item) {
        (StateOpKind::Add, Some(item)) => {
            if strict {
                let key = rules
                    .key(item)
                    .ok_or_else(|| StateOpError::OutOfBoundsAdd(item.clone()))?;
                let wanted = key_counts(state.target(), rules)
                    .get(&key)
                    .copied()
                    .unwrap_or(0);
                let have = key_counts(state.current(), rules)
                    .get(&key)
                    .copied()
                    .unwrap_or(0);
                if have >= wanted {
                    return Err(StateOpError::OutOfBoundsAdd(item.clone()));
                }
            }
            current.push(item.clone());
        }
        (StateOpKind::Remove, Some(item)) => {
            let idx = current
                .iter()
                .position(|c| rules.items_match(c, item))
                .ok_or_else(|| StateOpError::RemoveMissing(item.clone()))?;
            current.remove(idx);
        }
        (StateOpKind::Clear, None) => current.clear(),
        _ => {
            return Err(StateOpError::Malformed(format!(
                "{:?} with item {:?}",
                op.kind, op.item
            )))
        }
    }
    Ok(state.with_current(current))
}

/// Complete iff every target item is matched by a distinct current item.
pub fn compute_completion(
    current: &[TaskItem],
    target: &[TaskItem],
    rules: &MatchRules,
) -> CompletionStatus {
    if target.iter().any(|t| rules.key(t).is_none()) {
        return CompletionStatus::Incomplete;
    }
    let have = key_counts(current, rules);
    let complete = key_counts(target, rules)
        .iter()
        .all(|(k, n)| have.get(k).copied().unwrap_or(0) >= *n);
    CompletionStatus::from_bool(complete)
}

/// Every current item matches some target item.
pub fn within_bounds(state: &TaskState, rules: &MatchRules) -> bool {
    state
        .current()
        .iter()
        .all(|c| state.target().iter().any(|t| rules.items_match(c, t)))
}

/// Target items not yet covered by the current order, in target order.
pub fn pending_items(state: &TaskState, rules: &MatchRules) -> Vec<TaskItem> {
    let mut have = key_counts(state.current(), rules);
    let mut out = Vec::new();
    for t in state.target() {
        match rules
            .key(t)
            .and_then(|k| have.get_mut(&k).filter(|n| **n > 0))
        {
            Some(n) => *n -= 1,
            None => out.push(t.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub ops: Vec<StateOp>,
    pub telemetry: TelemetryRecord,
}

/// Turns an ordering-system message into state operations.
pub trait StateExtractor: Send + Sync {
    fn extract(&self, message: &str, state: &TaskState) -> Result<Extraction, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracked {
    pub state: TaskState,
    /// The sub-agent call followed by one record per emitted operation.
    pub records: Vec<ToolCallRecord>,
    pub rejected: Vec<StateOpError>,
    pub telemetry: TelemetryRecord,
}

pub fn track_state(
    message: &str,
    state: &TaskState,
    extractor: &dyn StateExtractor,
    strict: bool,
    rules: &MatchRules,
) -> Result<Tracked, AgentError> {
    let extraction = extractor.extract(message, state)?;
    let ops_json = serde_json::to_string(&extraction.ops).expect("ops serialize");
    let mut records = vec![ToolCallRecord::new(
        "state_tracking",
        message,
        &ops_json,
        extraction.telemetry.latency_ms,
    )];
    let mut rejected = Vec::new();
    let mut next = state.clone();
    for op in &extraction.ops {
        let result = match apply_state_op(&next, op, strict, rules) {
            Ok(s) => {
                next = s;
                "ok".to_owned()
            }
            Err(e) => {
                let text = format!("rejected: {e}");
                rejected.push(e);
                text
            }
        };
        records.push(ToolCallRecord::new(
            op.tool_name(),
            &op.arguments(),
            &result,
            0,
        ));
    }
    Ok(Tracked {
        state: next,
        records,
        rejected,
        telemetry: extraction.telemetry,
    })
}

pub fn state_tools() -> Vec<ToolSchema> {
    let item_params = json!({
        "type": "object",
        "properties": {
            "item": { "type": "string", "description": "Item name with modifiers, e.g. \"veggie burger, no onions\"" },
            "quantity": { "type": "integer", "minimum": 1 }
        },
        "required": ["item"]
    });
    vec![
        ToolSchema {
            name: "add_item".into(),
            description: "Record an item the ordering assistant confirmed as added.".into(),
            parameters: item_params.clone(),
        },
        ToolSchema {
            name: "remove_item".into(),
            description: "Record an item the ordering assistant confirmed as removed.".into(),
            parameters: item_params,
        },
        ToolSchema {
            name: "clear_items".into(),
            description: "Record that the ordering assistant emptied the order.".into(),
            parameters: json!({ "type": "object", "properties": {} }),
        },
    ]
}

/// The request the state tracking agent sends for `message`.
pub fn state_request(prompts: &PromptSet, state: &TaskState, message: &str) -> ChatRequest {
    let system = render(&prompts.state_tracking, &[("state", &state_text(state))]);
    ChatRequest {
        model: String::new(),
        messages: vec![ChatMessage::system(system), ChatMessage::user(message)],
        tools: state_tools(),
        temperature: EXTRACTION_TEMPERATURE,
    }
}

#[derive(Deserialize)]
struct ItemArgs {
    item: String,
    #[serde(default = "one")]
    quantity: u32,
}

fn one() -> u32 {
    1
}

pub fn op_from_tool_call(call: &ToolCall) -> Result<StateOp, AgentError> {
    let malformed = |why: String| AgentError::Extraction {
        message: why,
        raw: format!("{}({})", call.name, call.arguments),
    };
    let item = || -> Result<TaskItem, AgentError> {
        let args: ItemArgs =
            serde_json::from_str(&call.arguments).map_err(|e| malformed(e.to_string()))?;
        TaskItem::new(args.item, args.quantity).map_err(|e| malformed(e.to_string()))
    };
    match call.name.as_str() {
        "add_item" => Ok(StateOp::add(item()?)),
        "remove_item" => Ok(StateOp::remove(item()?)),
        "clear_items" => Ok(StateOp::clear()),
        other => Err(malformed(format!("unknown state tool `{other}`"))),
    }
}

/// State tracking agent backed by a chat model with tool calling.
pub struct LlmStateExtractor {
    backend: Arc<dyn ChatBackend>,
    prompts: Arc<PromptSet>,
}

impl LlmStateExtractor {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        Self { backend, prompts }
    }
}

impl StateExtractor for LlmStateExtractor {
    fn extract(&self, message: &str, state: &TaskState) -> Result<Extraction, AgentError> {
        let request = state_request(&self.prompts, state, message);
        let result = gateway::complete(self.backend.as_ref(), &request)?;
        let ops = result
            .message
            .tool_calls
            .iter()
            .map(op_from_tool_call)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Extraction {
            ops,
            telemetry: result.telemetry,
        })
    }
}

/// Rule-based extractor reading the `added ... to your order` family of
/// confirmations.
#[derive(Debug, Clone, Default)]
pub struct ScriptedStateExtractor {
    prompts: Arc<PromptSet>,
}

impl ScriptedStateExtractor {
    pub fn new(prompts: Arc<PromptSet>) -> Self {
        Self { prompts }
    }

    pub fn ops(message: &str) -> Vec<StateOp> {
        let mut ops = Vec::new();
        for event in order_events(message) {
            match event {
                OrderEvent::Added(items) => ops.extend(items.into_iter().map(StateOp::add)),
                OrderEvent::Removed(items) => ops.extend(items.into_iter().map(StateOp::remove)),
                OrderEvent::Cleared => ops.push(StateOp::clear()),
            }
        }
        ops
    }
}

impl StateExtractor for ScriptedStateExtractor {
    fn extract(&self, message: &str, state: &TaskState) -> Result<Extraction, AgentError> {
        let ops = Self::ops(message);
        let request = state_request(&self.prompts, state, message);
        let reply: String = ops
            .iter()
            .map(|o| format!("{}{}", o.tool_name(), o.arguments()))
            .collect();
        Ok(Extraction {
            telemetry: estimated_telemetry(&request, &reply),
            ops,
        })
    }
}
