use std::path::Path;

use crate::domain::{Menu, MessageAttributes, TaskState};
use crate::text::render_items;

/// System prompt templates. Placeholders are written `{{name}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub user_agent: String,
    pub state_tracking: String,
    pub message_attributes: String,
    pub ordering_system: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            user_agent: include_str!("../../prompts/user_agent.txt").to_owned(),
            state_tracking: include_str!("../../prompts/state_tracking.txt").to_owned(),
            message_attributes: include_str!("../../prompts/message_attributes.txt").to_owned(),
            ordering_system: include_str!("../../prompts/ordering_system.txt").to_owned(),
        }
    }
}

impl PromptSet {
    /// Loads the four templates from `dir`, falling back to the bundled
    /// text for any file that is absent.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        for (file, slot) in [
            ("user_agent.txt", &mut set.user_agent),
            ("state_tracking.txt", &mut set.state_tracking),
            ("message_attributes.txt", &mut set.message_attributes),
            ("ordering_system.txt", &mut set.ordering_system),
        ] {
            let path = dir.join(file);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }
}

pub const NOT_AVAILABLE: &str = "(not available in this configuration)";

/// Replaces every `{{key}}` with its value; unknown placeholders stay.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in values {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

/// One line per item: `name (category): modifier, modifier`.
pub fn menu_text(menu: &Menu) -> String {
    menu.items
        .iter()
        .map(|i| {
            if i.modifiers.is_empty() {
                format!("- {} ({})", i.name, i.category)
            } else {
                format!("- {} ({}): {}", i.name, i.category, i.modifiers.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn state_text(state: &TaskState) -> String {
    let current = if state.current().is_empty() {
        "nothing yet".to_owned()
    } else {
        render_items(state.current())
    };
    format!(
        "Confirmed so far: {current}\nGoal: {}",
        render_items(state.target())
    )
}

pub fn attributes_text(attrs: &MessageAttributes) -> String {
    format!(
        "mood_tone: {}\ntask_execution_style: {}\nexploration_style: {}\ntask_completion_status: {}",
        attrs.mood_tone, attrs.task_execution_style, attrs.exploration_style, attrs.task_completion_status
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_carry_placeholders() {
        let p = PromptSet::default();
        for key in [
            "persona_bio",
            "menu",
            "state",
            "attributes",
            "target",
            "directive",
        ] {
            assert!(p.user_agent.contains(&format!("{{{{{key}}}}}")), "{key}");
        }
        assert!(p.state_tracking.contains("{{state}}"));
        assert!(p.message_attributes.contains("{{persona_bio}}"));
        assert!(p.ordering_system.contains("{{menu}}"));
        assert!(!p.ordering_system.contains("{{target}}"));
    }

    #[test]
    fn render_replaces_all_occurrences() {
        assert_eq!(
            render("{{a}} and {{a}} {{b}}", &[("a", "x")]),
            "x and x {{b}}"
        );
    }
}
