//! The ordering system the simulated guest talks to. It sees the
//! conversation and the menu, nothing else.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{menu_text, render, PromptSet};
use crate::domain::{MatchRules, Menu, Normalizer, TaskItem, TelemetryRecord};
use crate::gateway::{
    self, estimated_telemetry, ChatBackend, ChatMessage, ChatRequest, ChatRole, GatewayError,
    SIMULATION_TEMPERATURE,
};
use crate::text::{order_events, render_items, MenuIndex, OrderEvent};

#[derive(Debug, Error)]
pub enum CounterpartError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("remote counterpart needs a backend")]
    MissingBackend,
    #[error("the ordering system produced an empty reply")]
    EmptyReply,
    #[error("invalid counterpart configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterpartMode {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterpartConfig {
    pub mode: CounterpartMode,
    pub greeting: String,
    /// `{items}` is replaced by the recognized items.
    pub confirmation_template: String,
    pub closing_template: String,
}

impl Default for CounterpartConfig {
    fn default() -> Self {
        Self {
            mode: CounterpartMode::Scripted,
            greeting: "Welcome to the Corner Kitchen! What can I get started for you today?".into(),
            confirmation_template: "Got it, I've added {items} to your order.".into(),
            closing_template: "Thank you! Your order is confirmed and will be ready shortly."
                .into(),
        }
    }
}

impl CounterpartConfig {
    pub fn validate(&self) -> Result<(), CounterpartError> {
        if self.greeting.trim().is_empty() {
            return Err(CounterpartError::InvalidConfig("greeting is empty"));
        }
        if !self.confirmation_template.contains("{items}") {
            return Err(CounterpartError::InvalidConfig(
                "confirmation template lacks {items}",
            ));
        }
        if self.closing_template.trim().is_empty() {
            return Err(CounterpartError::InvalidConfig("closing template is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterpartReply {
    pub text: String,
    pub telemetry: TelemetryRecord,
}

/// `history` holds guest lines as `user` and ordering-system lines as
/// `assistant`.
pub trait Counterpart: Send + Sync {
    fn respond(
        &self,
        history: &[ChatMessage],
        menu: &Menu,
    ) -> Result<CounterpartReply, CounterpartError>;
}

/// Dispatches on `cfg.mode`.
pub fn respond(
    history: &[ChatMessage],
    menu: &Menu,
    cfg: &CounterpartConfig,
    backend: Option<Arc<dyn ChatBackend>>,
) -> Result<CounterpartReply, CounterpartError> {
    match cfg.mode {
        CounterpartMode::Scripted => {
            ScriptedCounterpart::new(cfg.clone(), Normalizer::default()).respond(history, menu)
        }
        CounterpartMode::Remote => {
            let backend = backend.ok_or(CounterpartError::MissingBackend)?;
            LlmCounterpart::new(backend, Arc::default(), cfg.clone()).respond(history, menu)
        }
    }
}

pub fn counterpart_request(
    prompts: &PromptSet,
    history: &[ChatMessage],
    menu: &Menu,
) -> ChatRequest {
    let mut messages = vec![ChatMessage::system(render(
        &prompts.ordering_system,
        &[("menu", &menu_text(menu))],
    ))];
    messages.extend(history.iter().cloned());
    ChatRequest {
        model: String::new(),
        messages,
        tools: Vec::new(),
        temperature: SIMULATION_TEMPERATURE,
    }
}

/// Ordering system backed by a chat model. Opens with the configured
/// greeting without a model call.
pub struct LlmCounterpart {
    backend: Arc<dyn ChatBackend>,
    prompts: Arc<PromptSet>,
    cfg: CounterpartConfig,
}

impl LlmCounterpart {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        prompts: Arc<PromptSet>,
        cfg: CounterpartConfig,
    ) -> Self {
        Self {
            backend,
            prompts,
            cfg,
        }
    }
}

impl Counterpart for LlmCounterpart {
    fn respond(
        &self,
        history: &[ChatMessage],
        menu: &Menu,
    ) -> Result<CounterpartReply, CounterpartError> {
        if history.is_empty() {
            return Ok(CounterpartReply {
                text: self.cfg.greeting.clone(),
                telemetry: TelemetryRecord::default(),
            });
        }
        let request = counterpart_request(&self.prompts, history, menu);
        let result = gateway::complete(self.backend.as_ref(), &request)?;
        let text = result.message.content.trim().to_owned();
        if text.is_empty() {
            return Err(CounterpartError::EmptyReply);
        }
        Ok(CounterpartReply {
            text,
            telemetry: result.telemetry,
        })
    }
}

const REMOVAL_CUES: &[&str] = &["remove", "cancel", "take off", "dont want"];
const COMPLETION_CUES: &[&str] = &[
    "thats everything",
    "thats all",
    "confirm my",
    "nothing else",
];

/// Rule-based ordering system. Recognizes menu items by normalized token
/// match, asks which item is meant when a short name fits several, lists
/// a category when asked about it, and reads back the order once the guest
/// says it is done. Its view of the order is rebuilt from its own earlier
/// confirmations, so identical histories give identical replies.
pub struct ScriptedCounterpart {
    cfg: CounterpartConfig,
    rules: MatchRules,
    plain: Normalizer,
    prompts: Arc<PromptSet>,
}

impl ScriptedCounterpart {
    pub fn new(cfg: CounterpartConfig, normalizer: Normalizer) -> Self {
        Self {
            cfg,
            rules: MatchRules::new(normalizer, Default::default()),
            plain: Normalizer::new::<[&str; 0], &str>([]),
            prompts: Arc::default(),
        }
    }

    fn order_so_far(&self, history: &[ChatMessage]) -> Vec<TaskItem> {
        let mut order: Vec<TaskItem> = Vec::new();
        for m in history.iter().filter(|m| m.role == ChatRole::Assistant) {
            for event in order_events(&m.content) {
                match event {
                    OrderEvent::Added(items) => order.extend(items),
                    OrderEvent::Removed(items) => {
                        for item in items {
                            if let Some(i) =
                                order.iter().position(|o| self.rules.items_match(o, &item))
                            {
                                order.remove(i);
                            }
                        }
                    }
                    OrderEvent::Cleared => order.clear(),
                }
            }
        }
        order
    }

    fn has_cue(&self, text: &str, cues: &[&str]) -> bool {
        let padded = format!(" {} ", self.plain.normalize(text));
        cues.iter().any(|c| padded.contains(&format!(" {c} ")))
    }

    fn reply_text(&self, history: &[ChatMessage], menu: &Menu) -> String {
        let Some(last) = history.iter().rev().find(|m| m.role == ChatRole::User) else {
            return self.cfg.greeting.clone();
        };
        let index = MenuIndex::new(menu, &self.rules.normalizer);
        let scan = index.scan(&last.content);
        let mut order = self.order_so_far(history);
        let mut parts: Vec<String> = Vec::new();

        if self.has_cue(&last.content, REMOVAL_CUES) && !scan.items.is_empty() {
            let mut removed = Vec::new();
            for item in &scan.items {
                let found = order.iter().position(|o| {
                    self.rules.normalizer.normalize(&o.raw_text)
                        == self.rules.normalizer.normalize(&item.raw_text)
                });
                match found {
                    Some(i) => removed.push(order.remove(i)),
                    None => parts.push(format!("I don't see {} on your order.", item.raw_text)),
                }
            }
            if !removed.is_empty() {
                parts.insert(
                    0,
                    format!(
                        "Okay, I've removed {} from your order.",
                        render_items(&removed)
                    ),
                );
            }
        } else if !scan.items.is_empty() {
            parts.push(
                self.cfg
                    .confirmation_template
                    .replace("{items}", &render_items(&scan.items)),
            );
            order.extend(scan.items.iter().cloned());
        }
        let clarifying = scan.ambiguous.first().map(|(alias, options)| {
            format!("Which {alias} would you like: {}?", options.join(", "))
        });
        if let Some(q) = &clarifying {
            parts.push(q.clone());
        }

        if self.has_cue(&last.content, COMPLETION_CUES) {
            let summary = if order.is_empty() {
                "nothing yet".to_owned()
            } else {
                render_items(&order)
            };
            parts.push(format!("Here's your order: {summary}."));
            parts.push(self.cfg.closing_template.clone());
        } else if parts.is_empty() {
            match scan.categories.first() {
                Some(category) => {
                    let names: Vec<&str> = menu
                        .in_category(category)
                        .map(|i| i.name.as_str())
                        .collect();
                    parts.push(format!(
                        "Our {category} are: {}. Anything catch your eye?",
                        names.join(", ")
                    ));
                }
                None => parts
                    .push("Sorry, I didn't catch that. What would you like to order?".to_owned()),
            }
        } else if clarifying.is_none() {
            parts.push("Anything else?".to_owned());
        }
        parts.join(" ")
    }
}

impl Counterpart for ScriptedCounterpart {
    fn respond(
        &self,
        history: &[ChatMessage],
        menu: &Menu,
    ) -> Result<CounterpartReply, CounterpartError> {
        let text = self.reply_text(history, menu);
        let request = counterpart_request(&self.prompts, history, menu);
        Ok(CounterpartReply {
            telemetry: if history.is_empty() {
                TelemetryRecord::default()
            } else {
                estimated_telemetry(&request, &text)
            },
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MenuItem;

    fn menu() -> Menu {
        let item = |name: &str, cat: &str, mods: &[&str]| MenuItem {
            name: name.into(),
            category: cat.into(),
            modifiers: mods.iter().map(|m| (*m).into()).collect(),
        };
        Menu {
            items: vec![
                item("veggie burger", "burgers", &["no onions"]),
                item("classic burger", "burgers", &[]),
                item("small fries", "sides", &[]),
                item("cola", "drinks", &[]),
            ],
        }
    }

    fn cp() -> ScriptedCounterpart {
        ScriptedCounterpart::new(CounterpartConfig::default(), Normalizer::default())
    }

    fn say(history: &[ChatMessage]) -> String {
        cp().respond(history, &menu()).unwrap().text
    }

    #[test]
    fn greets_on_empty_history() {
        let cfg = CounterpartConfig::default();
        assert_eq!(
            respond(&[], &menu(), &cfg, None).unwrap().text,
            cfg.greeting
        );
    }

    #[test]
    fn confirms_recognized_items() {
        let h = vec![
            ChatMessage::assistant("Welcome!"),
            ChatMessage::user("veggie burger"),
        ];
        assert_eq!(
            say(&h),
            "Got it, I've added 1x veggie burger to your order. Anything else?"
        );
    }

    #[test]
    fn summary_and_closing_on_completion() {
        let h = vec![
            ChatMessage::assistant("Welcome!"),
            ChatMessage::user("Two small fries and a cola"),
            ChatMessage::assistant(
                "Got it, I've added 2x small fries; 1x cola to your order. Anything else?",
            ),
            ChatMessage::user("that's all"),
        ];
        let cfg = CounterpartConfig::default();
        assert_eq!(
            say(&h),
            format!(
                "Here's your order: 2x small fries; 1x cola. {}",
                cfg.closing_template
            )
        );
    }

    #[test]
    fn clarifies_short_names_and_lists_categories() {
        let h = vec![
            ChatMessage::assistant("Welcome!"),
            ChatMessage::user("A burger please"),
        ];
        assert_eq!(
            say(&h),
            "Which burger would you like: veggie burger, classic burger?"
        );
        let h = vec![
            ChatMessage::assistant("Welcome!"),
            ChatMessage::user("What drinks do you have?"),
        ];
        assert_eq!(say(&h), "Our drinks are: cola. Anything catch your eye?");
    }

    #[test]
    fn removals_use_its_own_confirmations() {
        let h = vec![
            ChatMessage::assistant("Got it, I've added 1x cola to your order."),
            ChatMessage::user("Please remove the cola"),
        ];
        assert_eq!(
            say(&h),
            "Okay, I've removed 1x cola from your order. Anything else?"
        );
    }

    #[test]
    fn identical_history_identical_reply() {
        let h = vec![
            ChatMessage::assistant("Welcome!"),
            ChatMessage::user("cola and fries? hmm"),
        ];
        assert_eq!(
            cp().respond(&h, &menu()).unwrap(),
            cp().respond(&h, &menu()).unwrap()
        );
    }

    #[test]
    fn prompt_carries_no_target_placeholder() {
        let req = counterpart_request(&PromptSet::default(), &[ChatMessage::user("hi")], &menu());
        assert!(req.messages[0].content.contains("veggie burger"));
        assert!(!req.messages[0].content.contains("{{"));
    }
}
