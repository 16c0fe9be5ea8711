use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{value}` is not a valid {field}, expected one of: {expected}")]
pub struct ParseAttributeError {
    pub field: &'static str,
    pub value: String,
    pub expected: String,
}

macro_rules! attribute_enum {
    ($(#[$meta:meta])* $name:ident, $field:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ParseAttributeError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.trim().to_lowercase().replace(['_', ' '], "-");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == wanted)
                    .ok_or_else(|| ParseAttributeError {
                        field: $field,
                        value: s.to_owned(),
                        expected: $name::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(", "),
                    })
            }
        }
    };
}

attribute_enum!(
    /// Emotional register of a message.
    MoodTone, "mood_tone" {
        Casual => "casual",
        Frustrated => "frustrated",
        Confused => "confused",
        Enthusiastic => "enthusiastic",
    }
);

attribute_enum!(
    /// Whether task items are given one per message or together.
    ExecutionStyle, "task_execution_style" {
        OneByOne => "one-by-one",
        AllAtOnce => "all-at-once",
    }
);

attribute_enum!(
    ExplorationStyle, "exploration_style" {
        Explores => "explores",
        DoesNotExplore => "does-not-explore",
    }
);

attribute_enum!(
    CompletionStatus, "task_completion_status" {
        Complete => "complete",
        Incomplete => "incomplete",
    }
);

impl CompletionStatus {
    pub fn is_complete(self) -> bool {
        self == CompletionStatus::Complete
    }

    pub fn from_bool(complete: bool) -> Self {
        if complete {
            CompletionStatus::Complete
        } else {
            CompletionStatus::Incomplete
        }
    }
}

/// The behavioral record attached to one guest message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageAttributes {
    pub mood_tone: MoodTone,
    pub task_execution_style: ExecutionStyle,
    pub exploration_style: ExplorationStyle,
    pub task_completion_status: CompletionStatus,
}

impl MessageAttributes {
    pub fn from_expected(expected: &ExpectedAttributes, status: CompletionStatus) -> Self {
        Self {
            mood_tone: expected.mood_tone,
            task_execution_style: expected.task_execution_style,
            exploration_style: expected.exploration_style,
            task_completion_status: status,
        }
    }
}

/// Persona profile the persona adherence score grades against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpectedAttributes {
    pub mood_tone: MoodTone,
    pub task_execution_style: ExecutionStyle,
    pub exploration_style: ExplorationStyle,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_names_round_trip() {
        let attrs = MessageAttributes {
            mood_tone: MoodTone::Frustrated,
            task_execution_style: ExecutionStyle::AllAtOnce,
            exploration_style: ExplorationStyle::DoesNotExplore,
            task_completion_status: CompletionStatus::Incomplete,
        };
        let json = serde_json::to_string(&attrs).unwrap();
        assert_eq!(
            json,
            r#"{"mood_tone":"frustrated","task_execution_style":"all-at-once","exploration_style":"does-not-explore","task_completion_status":"incomplete"}"#
        );
        assert_eq!(
            serde_json::from_str::<MessageAttributes>(&json).unwrap(),
            attrs
        );
    }

    #[test]
    fn closed_enums_reject_unknown_values() {
        let err = "angry".parse::<MoodTone>().unwrap_err();
        assert_eq!(err.field, "mood_tone");
        assert!(serde_json::from_str::<MoodTone>(r#""angry""#).is_err());
    }

    #[test]
    fn lenient_spelling_on_parse() {
        assert_eq!(
            "One_By_One".parse::<ExecutionStyle>().unwrap(),
            ExecutionStyle::OneByOne
        );
        assert_eq!(
            "does not explore".parse::<ExplorationStyle>().unwrap(),
            ExplorationStyle::DoesNotExplore
        );
    }
}
