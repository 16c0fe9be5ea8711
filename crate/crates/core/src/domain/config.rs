use std::fmt;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// The five ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ConfigId {
    /// Single model, everything inlined in the prompt, no tools.
    Baseline = 1,
    /// User agent with a persona/target fetch tool, no sub-agents.
    UserAgentOnly = 2,
    /// User agent plus the state tracking sub-agent.
    WithStateTracking = 3,
    /// User agent plus the message attributes sub-agent.
    WithAttributes = 4,
    /// Both sub-agents.
    Full = 5,
}

/// Explainability tier a configuration is scored under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainabilityTier {
    None,
    Basic,
    BasicPlusOne,
    Full,
}

impl ConfigId {
    pub const ALL: [ConfigId; 5] = [
        ConfigId::Baseline,
        ConfigId::UserAgentOnly,
        ConfigId::WithStateTracking,
        ConfigId::WithAttributes,
        ConfigId::Full,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn has_state_tracker(self) -> bool {
        matches!(self, ConfigId::WithStateTracking | ConfigId::Full)
    }

    pub fn has_attribute_agent(self) -> bool {
        matches!(self, ConfigId::WithAttributes | ConfigId::Full)
    }

    pub fn uses_persona_fetch(self) -> bool {
        self == ConfigId::UserAgentOnly
    }

    /// The target order is handed to the user agent directly only in the
    /// two configurations without sub-agents.
    pub fn injects_target(self) -> bool {
        matches!(self, ConfigId::Baseline | ConfigId::UserAgentOnly)
    }

    pub fn tier(self) -> ExplainabilityTier {
        match self {
            ConfigId::Baseline => ExplainabilityTier::None,
            ConfigId::UserAgentOnly => ExplainabilityTier::Basic,
            ConfigId::WithStateTracking | ConfigId::WithAttributes => {
                ExplainabilityTier::BasicPlusOne
            }
            ConfigId::Full => ExplainabilityTier::Full,
        }
    }

    /// Tool names a guest turn may record under this configuration.
    pub fn registered_tools(self) -> &'static [&'static str] {
        match self {
            ConfigId::Baseline => &[],
            ConfigId::UserAgentOnly => &["persona_fetch"],
            ConfigId::WithStateTracking => {
                &["state_tracking", "add_item", "remove_item", "clear_items"]
            }
            ConfigId::WithAttributes => &["message_attributes"],
            ConfigId::Full => &[
                "state_tracking",
                "add_item",
                "remove_item",
                "clear_items",
                "message_attributes",
            ],
        }
    }

    pub fn dir_name(self) -> String {
        format!("config{}", self.number())
    }
}

impl TryFrom<u8> for ConfigId {
    type Error = DomainError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ConfigId::ALL
            .into_iter()
            .find(|c| c.number() == value)
            .ok_or(DomainError::InvalidConfig(value))
    }
}

impl From<ConfigId> for u8 {
    fn from(value: ConfigId) -> Self {
        value.number()
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}
