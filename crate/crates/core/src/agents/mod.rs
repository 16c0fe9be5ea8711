//! The simulated guest: state tracking agent, message attributes agent and
//! the orchestrating user agent with its protocol and exit gating.

mod attributes;
mod orchestrator;
mod prompts;
mod responder;
mod state;

pub use attributes::{
    attributes_request, generate_attributes, parse_attributes, AttributeInput, AttributePolicy,
    LlmAttributePolicy, Proposal, ScriptedAttributePolicy, LAST_ITEM_PHRASE,
};
pub use orchestrator::{
    plan_for, run_conversation, run_turn, run_turn_with_plan, AgentContext, Backends, GuestTurn,
    Limits, Phase, SimulationSettings, Step,
};
pub use prompts::{attributes_text, menu_text, render, state_text, PromptSet, NOT_AVAILABLE};
pub use responder::{
    generate_response, guest_request, Directive, GuestResponder, LlmGuestResponder, Reply,
    ResponseInput, ScriptedGuest, ORDER_COMPLETE_MARKER,
};
pub use state::{
    apply_state_op, compute_completion, op_from_tool_call, pending_items, state_request,
    state_tools, track_state, within_bounds, Extraction, LlmStateExtractor, ScriptedStateExtractor,
    StateExtractor, StateOp, StateOpError, StateOpKind, Tracked,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Role;
use crate::gateway::{ChatMessage, GatewayError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("protocol violation: `{step}` ran before `{missing}` in this turn")]
    ProtocolViolation {
        step: &'static str,
        missing: &'static str,
    },
    #[error("`{step}` is not registered in configuration {config}")]
    UnregisteredStep { step: &'static str, config: u8 },
    #[error("attribute parse error: {message} (raw payload: {raw})")]
    AttributeParse { message: String, raw: String },
    #[error("state extraction failed: {message} (raw payload: {raw})")]
    Extraction { message: String, raw: String },
    #[error("the guest produced an empty message")]
    EmptyReply,
    #[error("the conversation is already closed")]
    Closed,
    #[error("phase cannot move back from {from:?} to {to:?}")]
    PhaseRegression { from: Phase, to: Phase },
}

/// One message of the conversation, from the simulation's point of view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub text: String,
}

impl Utterance {
    pub fn guest(text: impl Into<String>) -> Self {
        Self {
            role: Role::Guest,
            text: text.into(),
        }
    }

    pub fn counterpart(text: impl Into<String>) -> Self {
        Self {
            role: Role::Counterpart,
            text: text.into(),
        }
    }
}

/// Chat messages as seen by the guest: its own lines are `assistant`.
pub fn guest_view(history: &[Utterance]) -> Vec<ChatMessage> {
    history
        .iter()
        .map(|u| match u.role {
            Role::Guest => ChatMessage::assistant(&u.text),
            Role::Counterpart => ChatMessage::user(&u.text),
        })
        .collect()
}

/// Chat messages as seen by the ordering system: guest lines are `user`.
pub fn counterpart_view(history: &[Utterance]) -> Vec<ChatMessage> {
    history
        .iter()
        .map(|u| match u.role {
            Role::Guest => ChatMessage::user(&u.text),
            Role::Counterpart => ChatMessage::assistant(&u.text),
        })
        .collect()
}

/// The last `n` utterances as `Guest: ...` / `Assistant: ...` lines.
pub fn transcript(history: &[Utterance], n: usize) -> String {
    let start = history.len().saturating_sub(n);
    if start == history.len() {
        return "(no messages yet)".to_owned();
    }
    history[start..]
        .iter()
        .map(|u| match u.role {
            Role::Guest => format!("Guest: {}", u.text),
            Role::Counterpart => format!("Assistant: {}", u.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Independent stream per (seed, conversation, turn, purpose).
pub(crate) fn rng_for(seed: u64, test_case_id: &str, turn: u32, purpose: &str) -> ChaCha8Rng {
    let mut key = seed ^ fnv1a(test_case_id.as_bytes()).rotate_left(17);
    key ^= fnv1a(purpose.as_bytes()).rotate_left(41);
    key = key.wrapping_add(u64::from(turn).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    ChaCha8Rng::seed_from_u64(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = rng_for(1, "tc", 2, "guest").random();
        let b: u64 = rng_for(1, "tc", 2, "guest").random();
        let c: u64 = rng_for(1, "tc", 3, "guest").random();
        let d: u64 = rng_for(1, "tc", 2, "attributes").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn views_swap_roles() {
        let h = vec![Utterance::counterpart("hi"), Utterance::guest("fries")];
        assert_eq!(guest_view(&h)[0].role, crate::gateway::ChatRole::User);
        assert_eq!(counterpart_view(&h)[1].role, crate::gateway::ChatRole::User);
    }
}
