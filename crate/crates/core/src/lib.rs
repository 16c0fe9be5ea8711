//! Multi-agent simulation of human users in goal-oriented conversations.
//!
//! A simulated guest is driven by three cooperating agents: an orchestrating
//! user agent, a state tracking agent that maintains the confirmed and target
//! task items, and a message attributes agent that picks the behavioral
//! attributes of every message. The [`harness`] runs the five ablation
//! configurations against an ordering-system [`counterpart`] and scores the
//! resulting logs with the [`metrics`] suite.

pub mod agents;
pub mod counterpart;
pub mod domain;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod text;

pub use domain::{
    items_match, normalize_item, CompletionStatus, ConfigId, ConversationLog, ExecutionStyle,
    ExplorationStyle, MatchRules, Menu, MessageAttributes, MoodTone, Persona, TaskItem, TaskState,
    TestCase,
};
