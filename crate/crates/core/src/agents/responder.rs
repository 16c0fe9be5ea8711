use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attributes::LAST_ITEM_PHRASE;
use super::orchestrator::{required_steps, Step};
use super::prompts::{attributes_text, menu_text, render, state_text, PromptSet, NOT_AVAILABLE};
use super::state::pending_items;
use super::{guest_view, rng_for, AgentError, Utterance};
use crate::domain::{
    CompletionStatus, ConfigId, ExecutionStyle, ExplorationStyle, ItemKey, MatchRules, Menu,
    MessageAttributes, MoodTone, Persona, Role, TaskItem, TaskState, TelemetryRecord,
};
use crate::gateway::{
    self, estimated_telemetry, ChatBackend, ChatMessage, ChatRequest, ToolCall,
    SIMULATION_TEMPERATURE,
};
use crate::text::{quantity_word, render_items, MenuIndex};

/// Marker a model-backed guest appends once it considers its order placed.
pub const ORDER_COMPLETE_MARKER: &str = "[ORDER_COMPLETE]";

/// What the guest should do with its next message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Greet,
    Build,
    RequestConfirmation,
    Close,
}

impl Directive {
    fn instruction(self) -> &'static str {
        match self {
            Directive::Greet => "Greet the assistant and start your order.",
            Directive::Build => "Continue placing your order.",
            Directive::RequestConfirmation => {
                "Every item is in. Tell the assistant you are done and ask them to confirm the order."
            }
            Directive::Close => "The order is confirmed. Thank the assistant and say goodbye.",
        }
    }
}

/// Everything the user agent may use to write one guest message.
#[derive(Debug, Clone, Copy)]
pub struct ResponseInput<'a> {
    pub config: ConfigId,
    pub test_case_id: &'a str,
    pub persona: &'a Persona,
    pub target: &'a [TaskItem],
    pub state: Option<&'a TaskState>,
    pub attributes: Option<&'a MessageAttributes>,
    /// Result of the persona/target fetch tool, when it ran this turn.
    pub persona_fetch: Option<&'a str>,
    /// Earlier messages, ending with the ordering system's latest one.
    pub history: &'a [Utterance],
    pub directive: Directive,
    pub turn: u32,
    pub menu: &'a Menu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub telemetry: TelemetryRecord,
    /// The guest says it has asked for everything.
    pub claims_complete: bool,
}

/// Writes guest messages.
pub trait GuestResponder: Send + Sync {
    fn respond(&self, input: &ResponseInput<'_>) -> Result<Reply, AgentError>;
}

/// Checks that this turn's sub-agents ran and produced their outputs, then
/// asks the responder for the message.
pub fn generate_response(
    input: &ResponseInput<'_>,
    responder: &dyn GuestResponder,
    trace: &[String],
) -> Result<Reply, AgentError> {
    for step in required_steps(input.config) {
        if !trace.iter().any(|t| t == step.name()) {
            return Err(AgentError::ProtocolViolation {
                step: Step::Respond.name(),
                missing: step.name(),
            });
        }
    }
    if input.config.has_state_tracker() && input.state.is_none() {
        return Err(AgentError::ProtocolViolation {
            step: Step::Respond.name(),
            missing: Step::StateTracking.name(),
        });
    }
    if input.config.has_attribute_agent() && input.attributes.is_none() {
        return Err(AgentError::ProtocolViolation {
            step: Step::Respond.name(),
            missing: Step::MessageAttributes.name(),
        });
    }
    let reply = responder.respond(input)?;
    if reply.text.trim().is_empty() {
        return Err(AgentError::EmptyReply);
    }
    Ok(reply)
}

/// The request the user agent sends: the system prompt filled according to
/// what the configuration exposes, then the conversation from the guest's
/// side.
pub fn guest_request(prompts: &PromptSet, input: &ResponseInput<'_>) -> ChatRequest {
    let config = input.config;
    let via_tool = "(provided by the persona_fetch tool result)";
    let persona_bio = if config.uses_persona_fetch() {
        via_tool
    } else {
        input.persona.biography.as_str()
    };
    let target = match config {
        ConfigId::Baseline => render_items(input.target),
        ConfigId::UserAgentOnly => via_tool.to_owned(),
        _ => NOT_AVAILABLE.to_owned(),
    };
    let state = match (input.state, config) {
        (Some(s), _) => state_text(s),
        (None, ConfigId::WithAttributes) => format!(
            "Goal: {}\nConfirmed items are not tracked in this configuration.",
            render_items(input.target)
        ),
        (None, _) => NOT_AVAILABLE.to_owned(),
    };
    let attributes = input
        .attributes
        .map(attributes_text)
        .unwrap_or_else(|| NOT_AVAILABLE.to_owned());
    let system = render(
        &prompts.user_agent,
        &[
            ("persona_bio", persona_bio),
            ("menu", &menu_text(input.menu)),
            ("target", &target),
            ("state", &state),
            ("attributes", &attributes),
            ("directive", input.directive.instruction()),
        ],
    );
    let mut messages = vec![ChatMessage::system(system)];
    if let Some(payload) = input.persona_fetch {
        let id = format!("persona_fetch_{}", input.turn);
        messages.push(ChatMessage::tool_calls(vec![ToolCall {
            id: id.clone(),
            name: "persona_fetch".into(),
            arguments: "{}".into(),
        }]));
        messages.push(ChatMessage::tool_result(id, payload));
    }
    messages.extend(guest_view(input.history));
    ChatRequest {
        model: String::new(),
        messages,
        tools: Vec::new(),
        temperature: SIMULATION_TEMPERATURE,
    }
}

/// User agent backed by a chat model.
pub struct LlmGuestResponder {
    backend: Arc<dyn ChatBackend>,
    prompts: Arc<PromptSet>,
}

impl LlmGuestResponder {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        Self { backend, prompts }
    }
}

impl GuestResponder for LlmGuestResponder {
    fn respond(&self, input: &ResponseInput<'_>) -> Result<Reply, AgentError> {
        let request = guest_request(&self.prompts, input);
        let result = gateway::complete(self.backend.as_ref(), &request)?;
        let raw = result.message.content;
        let claims_complete = raw.contains(ORDER_COMPLETE_MARKER);
        Ok(Reply {
            text: raw.replace(ORDER_COMPLETE_MARKER, "").trim().to_owned(),
            telemetry: result.telemetry,
            claims_complete,
        })
    }
}

const REQUESTS: [&str; 4] = [
    "I'd like {items}.",
    "Could I get {items}?",
    "Can you add {items}?",
    "Let me have {items}.",
];
const REREQUESTS: [&str; 4] = [
    "I still need {items}.",
    "Could you add {items} for me?",
    "I'm still waiting on {items}.",
    "Please put in {items}.",
];
const EXPLORE: [&str; 2] = [
    "What do you recommend from the {category}?",
    "What {category} do you have?",
];
const FILLERS: [&str; 4] = [
    "Is there anything else you need from me?",
    "Let me know if you need anything else.",
    "I think I'm set for now.",
    "Just checking that everything is in.",
];
const CONFIRM_REQUEST: &str = "That's everything. Could you confirm my order?";
const CLOSINGS: [&str; 2] = [
    "Perfect, thank you so much. Goodbye!",
    "Great, thanks for your help. Bye!",
];

fn mood_prefixes(mood: MoodTone) -> &'static [&'static str] {
    match mood {
        MoodTone::Casual => &["", "Okay, ", "Sure, "],
        MoodTone::Frustrated => &["Ugh, ", "Look, "],
        MoodTone::Confused => &["Hmm, ", "Sorry, I'm not sure, but "],
        MoodTone::Enthusiastic => &["Ooh, ", "Awesome! "],
    }
}

/// Rule-based guest for deterministic runs.
///
/// Guests with a tracked state re-request whatever the state still lacks.
/// Guests without one work from memory of what they already asked for, so
/// an unanswered clarification can silently drop an item. Without an
/// attributes agent the guest's own behavior drifts from the persona
/// profile from turn to turn.
pub struct ScriptedGuest {
    seed: u64,
    rules: MatchRules,
    index: MenuIndex,
    categories: BTreeMap<String, String>,
    prompts: Arc<PromptSet>,
}

impl ScriptedGuest {
    /// Chance of a first mention by short name in a casual or confused mood.
    pub const SHORT_NAME_RATE: f64 = 0.35;
    /// Chance that a guest without state tracking answers a clarification.
    pub const UNTRACKED_CLARIFY_RATE: f64 = 0.5;
    /// Per-dimension chance of drifting off profile without an attributes agent.
    pub const DRIFT_RATE: f64 = 0.25;

    pub fn new(seed: u64, menu: &Menu, rules: MatchRules, prompts: Arc<PromptSet>) -> Self {
        let categories = menu
            .items
            .iter()
            .map(|i| {
                (
                    rules.normalizer.normalize(&i.name).to_string(),
                    i.category.clone(),
                )
            })
            .collect();
        Self {
            seed,
            index: MenuIndex::new(menu, &rules.normalizer),
            rules,
            categories,
            prompts,
        }
    }

    fn menu_name(item: &TaskItem) -> &str {
        item.raw_text
            .split(',')
            .next()
            .unwrap_or(&item.raw_text)
            .trim()
    }

    fn category_of(&self, item: &TaskItem) -> Option<&str> {
        let key = self
            .rules
            .normalizer
            .normalize(Self::menu_name(item))
            .to_string();
        self.categories.get(&key).map(String::as_str)
    }

    fn drifted(&self, persona: &Persona, rng: &mut ChaCha8Rng) -> MessageAttributes {
        let e = persona.expected_attributes;
        let mut a = MessageAttributes::from_expected(&e, CompletionStatus::Incomplete);
        if rng.random_bool(Self::DRIFT_RATE) {
            let others: Vec<MoodTone> = MoodTone::ALL
                .iter()
                .copied()
                .filter(|m| *m != e.mood_tone)
                .collect();
            a.mood_tone = *others.choose(rng).expect("other moods");
        }
        if rng.random_bool(Self::DRIFT_RATE) {
            a.task_execution_style = match e.task_execution_style {
                ExecutionStyle::OneByOne => ExecutionStyle::AllAtOnce,
                ExecutionStyle::AllAtOnce => ExecutionStyle::OneByOne,
            };
        }
        if rng.random_bool(Self::DRIFT_RATE) {
            a.exploration_style = match e.exploration_style {
                ExplorationStyle::Explores => ExplorationStyle::DoesNotExplore,
                ExplorationStyle::DoesNotExplore => ExplorationStyle::Explores,
            };
        }
        a
    }

    /// Target keys the guest has named in full, plus short names it used.
    fn own_mentions(
        &self,
        history: &[Utterance],
    ) -> (BTreeMap<ItemKey, usize>, Vec<String>, Vec<String>) {
        let mut named = BTreeMap::new();
        let mut short = Vec::new();
        let mut categories = Vec::new();
        for u in history.iter().filter(|u| u.role == Role::Guest) {
            let scan = self.index.scan(&u.text);
            for key in scan.items.iter().filter_map(|i| self.rules.key(i)) {
                *named.entry(key).or_insert(0) += 1;
            }
            short.extend(scan.ambiguous.into_iter().map(|(alias, _)| alias));
            categories.extend(scan.categories);
        }
        (named, short, categories)
    }

    fn short_name_of(&self, item: &TaskItem) -> Option<String> {
        self.index.short_name(Self::menu_name(item))
    }

    fn phrase(&self, item: &TaskItem, short: bool) -> String {
        let body = if short {
            let modifiers: Vec<&str> = item.raw_text.split(',').skip(1).map(str::trim).collect();
            let alias = self
                .short_name_of(item)
                .unwrap_or_else(|| Self::menu_name(item).to_owned());
            std::iter::once(alias.as_str())
                .chain(modifiers)
                .collect::<Vec<_>>()
                .join(", ")
        } else {
            item.raw_text.clone()
        };
        if item.quantity == 1 {
            let article = if body.starts_with(['a', 'e', 'i', 'o', 'u']) {
                "an"
            } else {
                "a"
            };
            format!("{article} {body}")
        } else {
            format!("{} {body}", quantity_word(item.quantity))
        }
    }

    fn build(
        &self,
        input: &ResponseInput<'_>,
        attrs: &MessageAttributes,
        rng: &mut ChaCha8Rng,
    ) -> (String, bool) {
        let turn = input.turn as usize;
        let prefix = {
            let options = mood_prefixes(attrs.mood_tone);
            let p = options[rng.random_range(0..options.len())];
            if input.directive == Directive::Greet {
                format!("Hi there! {p}")
            } else {
                p.to_owned()
            }
        };
        let (named, short_used, asked) = self.own_mentions(input.history);
        let tracked = input.state.is_some();

        // Target items the guest still has to ask for.
        let mut remembered = named.clone();
        let mut aliases = short_used.clone();
        let pending: Vec<TaskItem> = match input.state {
            Some(state) => pending_items(state, &self.rules),
            None => input
                .target
                .iter()
                .filter(|t| {
                    if let Some(n) = self
                        .rules
                        .key(t)
                        .and_then(|k| remembered.get_mut(&k))
                        .filter(|n| **n > 0)
                    {
                        *n -= 1;
                        return false;
                    }
                    if let Some(alias) = self.short_name_of(t) {
                        if let Some(pos) = aliases.iter().position(|a| *a == alias) {
                            aliases.remove(pos);
                            return false;
                        }
                    }
                    true
                })
                .cloned()
                .collect(),
        };

        // Answer a clarification about a short name.
        let last = input
            .history
            .iter()
            .rev()
            .find(|u| u.role == Role::Counterpart);
        if let Some(alias) = last.and_then(|u| clarified_alias(&u.text)) {
            let candidate = input.target.iter().find(|t| {
                self.short_name_of(t).as_deref() == Some(alias.as_str())
                    && if tracked {
                        pending.contains(t)
                    } else {
                        self.rules.key(t).is_none_or(|k| !named.contains_key(&k))
                    }
            });
            if let Some(item) = candidate {
                if tracked || rng.random_bool(Self::UNTRACKED_CLARIFY_RATE) {
                    let body = if item.quantity == 1 {
                        format!("The {}", item.raw_text)
                    } else {
                        format!("I meant {}", self.phrase(item, false))
                    };
                    return (format!("{prefix}{body}, please."), false);
                }
            }
        }

        if pending.is_empty() {
            return (format!("{prefix}{}", FILLERS[turn % FILLERS.len()]), false);
        }

        if attrs.exploration_style == ExplorationStyle::Explores {
            let fresh = pending
                .iter()
                .filter_map(|p| self.category_of(p))
                .find(|c| !asked.iter().any(|a| a == c));
            if let Some(category) = fresh {
                let q = EXPLORE[turn % EXPLORE.len()].replace("{category}", category);
                return (format!("{prefix}{q}"), false);
            }
        }

        let chosen: Vec<&TaskItem> = match attrs.task_execution_style {
            ExecutionStyle::AllAtOnce => pending.iter().collect(),
            ExecutionStyle::OneByOne => pending.iter().take(1).collect(),
        };
        let casual = matches!(attrs.mood_tone, MoodTone::Casual | MoodTone::Confused);
        let mut repeat = false;
        let phrases: Vec<String> = chosen
            .iter()
            .map(|item| {
                let mentioned = self.rules.key(item).is_some_and(|k| named.contains_key(&k))
                    || self
                        .short_name_of(item)
                        .is_some_and(|a| short_used.contains(&a));
                repeat |= mentioned;
                let short = !mentioned
                    && casual
                    && self.short_name_of(item).is_some()
                    && rng.random_bool(Self::SHORT_NAME_RATE);
                self.phrase(item, short)
            })
            .collect();
        let templates = if repeat { &REREQUESTS } else { &REQUESTS };
        let mut text = format!(
            "{prefix}{}",
            templates[turn % templates.len()].replace("{items}", &phrases.join(" and "))
        );
        let mut claims = false;
        if !tracked && chosen.len() == pending.len() {
            text.push(' ');
            text.push_str(LAST_ITEM_PHRASE);
            claims = true;
        }
        (text, claims)
    }
}

/// `"Which burger would you like: ..."` yields `burger`.
fn clarified_alias(message: &str) -> Option<String> {
    let lower = message.to_lowercase();
    let start = lower.find("which ")? + "which ".len();
    let end = lower[start..].find(" would you like")? + start;
    Some(lower[start..end].trim().to_owned())
}

impl GuestResponder for ScriptedGuest {
    fn respond(&self, input: &ResponseInput<'_>) -> Result<Reply, AgentError> {
        let mut rng = rng_for(self.seed, input.test_case_id, input.turn, "guest");
        let attrs = match input.attributes {
            Some(a) => *a,
            None => self.drifted(input.persona, &mut rng),
        };
        let turn = input.turn as usize;
        let (text, claims_complete) = match input.directive {
            Directive::Close => (CLOSINGS[turn % CLOSINGS.len()].to_owned(), false),
            Directive::RequestConfirmation => (CONFIRM_REQUEST.to_owned(), false),
            Directive::Greet | Directive::Build => self.build(input, &attrs, &mut rng),
        };
        let request = guest_request(&self.prompts, input);
        Ok(Reply {
            telemetry: estimated_telemetry(&request, &text),
            text,
            claims_complete,
        })
    }
}
