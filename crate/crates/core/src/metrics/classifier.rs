use serde::Deserialize;

use crate::domain::{
    CompletionStatus, ExecutionStyle, ExplorationStyle, Menu, MessageAttributes, MoodTone,
    Normalizer,
};
use crate::text::MenuIndex;

#[derive(Debug, Clone, Deserialize)]
struct MoodRule {
    mood: MoodTone,
    cues: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct Rules {
    version: String,
    default_mood: MoodTone,
    moods: Vec<MoodRule>,
    exploration_cues: Vec<String>,
    completion_cues: Vec<String>,
    all_at_once_min_items: usize,
}

/// Infers message attributes from raw guest text for logs that carry no
/// attribute snapshots.
///
/// Mood comes from the first matching cue list, exploration from
/// menu-question cues, completion from wrap-up cues, and execution style
/// from how many menu items the message names; a message naming none keeps
/// the previous message's style.
pub struct MessageClassifier {
    rules: Rules,
    plain: Normalizer,
    index: MenuIndex,
}

impl MessageClassifier {
    pub const BUNDLED_RULES: &'static str = include_str!("../../assets/classifier.json");

    pub fn new(menu: &Menu, normalizer: &Normalizer) -> Self {
        Self::from_json(Self::BUNDLED_RULES, menu, normalizer)
            .expect("bundled classifier rules parse")
    }

    pub fn from_json(
        rules: &str,
        menu: &Menu,
        normalizer: &Normalizer,
    ) -> Result<Self, serde_json::Error> {
        let plain = Normalizer::new::<[&str; 0], &str>([]);
        let mut rules: Rules = serde_json::from_str(rules)?;
        let norm = |cues: &mut Vec<String>| {
            for c in cues.iter_mut() {
                *c = plain.normalize(c).to_string();
            }
        };
        for m in &mut rules.moods {
            norm(&mut m.cues);
        }
        norm(&mut rules.exploration_cues);
        norm(&mut rules.completion_cues);
        Ok(Self {
            rules,
            index: MenuIndex::new(menu, normalizer),
            plain,
        })
    }

    pub fn version(&self) -> &str {
        &self.rules.version
    }

    fn has_any(padded: &str, cues: &[String]) -> bool {
        cues.iter()
            .any(|c| !c.is_empty() && padded.contains(&format!(" {c} ")))
    }

    /// Attributes for each message of a guest's message sequence.
    pub fn classify_sequence<'a, I>(&self, messages: I) -> Vec<MessageAttributes>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut execution = ExecutionStyle::OneByOne;
        messages
            .into_iter()
            .map(|text| {
                let padded = format!(" {} ", self.plain.normalize(text));
                let mood_tone = self
                    .rules
                    .moods
                    .iter()
                    .find(|m| Self::has_any(&padded, &m.cues))
                    .map(|m| m.mood)
                    .unwrap_or(self.rules.default_mood);
                let scan = self.index.scan(text);
                let named = scan.items.len() + scan.ambiguous.len();
                if named >= self.rules.all_at_once_min_items {
                    execution = ExecutionStyle::AllAtOnce;
                } else if named == 1 {
                    execution = ExecutionStyle::OneByOne;
                }
                MessageAttributes {
                    mood_tone,
                    task_execution_style: execution,
                    exploration_style: if Self::has_any(&padded, &self.rules.exploration_cues) {
                        ExplorationStyle::Explores
                    } else {
                        ExplorationStyle::DoesNotExplore
                    },
                    task_completion_status: CompletionStatus::from_bool(Self::has_any(
                        &padded,
                        &self.rules.completion_cues,
                    )),
                }
            })
            .collect()
    }
}
