use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// Filler words dropped during item normalization.
pub const DEFAULT_FILLERS: &[&str] = &[
    "a", "an", "the", "please", "some", "of", "with", "and", "extra", "order", "like", "want",
    "get", "me", "i", "i'd", "to",
];

static DEFAULT_NORMALIZER: LazyLock<Normalizer> = LazyLock::new(Normalizer::default);

/// Normalized item text: lowercase alphanumeric tokens joined by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|t| !t.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases, strips special characters and drops filler tokens.
///
/// Filler words go through the same character stripping as the input, so
/// `i'd` in the list removes the token `id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    fillers: BTreeSet<String>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new(DEFAULT_FILLERS.iter().copied())
    }
}

impl Normalizer {
    pub fn new<I, S>(fillers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fillers = fillers
            .into_iter()
            .flat_map(|f| {
                strip_special(f.as_ref())
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { fillers }
    }

    pub fn fillers(&self) -> impl Iterator<Item = &str> {
        self.fillers.iter().map(String::as_str)
    }

    pub fn normalize(&self, raw: &str) -> NormalizedText {
        let stripped = strip_special(raw);
        let tokens: Vec<&str> = stripped
            .split_whitespace()
            .filter(|t| !self.fillers.contains(*t))
            .collect();
        NormalizedText(tokens.join(" "))
    }

    /// Token list of the normalized text.
    pub fn tokens(&self, raw: &str) -> Vec<String> {
        self.normalize(raw).tokens().map(str::to_owned).collect()
    }
}

/// Lowercase, keep alphanumerics (digits included), turn whitespace into
/// spaces, delete everything else.
fn strip_special(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            out.push(ch);
        } else if ch.is_whitespace() {
            out.push(' ');
        }
    }
    out
}

/// Normalizes with the default filler list.
pub fn normalize_item(raw: &str) -> NormalizedText {
    DEFAULT_NORMALIZER.normalize(raw)
}

/// How quantities take part in matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityMode {
    /// Quantities are compared and duplicates count.
    #[default]
    Counted,
    /// Quantities collapse to one, matching plain set semantics.
    Set,
}

/// Identity of an item for matching purposes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemKey {
    pub text: NormalizedText,
    pub quantity: u32,
}

/// Normalizer plus quantity mode; everything needed to decide item identity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchRules {
    pub normalizer: Normalizer,
    pub quantities: QuantityMode,
}

impl MatchRules {
    pub fn new(normalizer: Normalizer, quantities: QuantityMode) -> Self {
        Self {
            normalizer,
            quantities,
        }
    }

    /// `None` when the item normalizes to nothing; such items never match.
    pub fn key(&self, item: &TaskItem) -> Option<ItemKey> {
        let text = self.normalizer.normalize(&item.raw_text);
        if text.is_empty() {
            return None;
        }
        let quantity = match self.quantities {
            QuantityMode::Counted => item.quantity,
            QuantityMode::Set => 1,
        };
        Some(ItemKey { text, quantity })
    }

    pub fn items_match(&self, a: &TaskItem, b: &TaskItem) -> bool {
        match (self.key(a), self.key(b)) {
            (Some(ka), Some(kb)) => ka == kb,
            _ => false,
        }
    }
}

/// Item match under the default rules.
pub fn items_match(a: &TaskItem, b: &TaskItem) -> bool {
    MatchRules::default().items_match(a, b)
}

/// One task item, e.g. `"veggie burger, no onions"` with quantity 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTaskItem")]
pub struct TaskItem {
    pub raw_text: String,
    pub quantity: u32,
}

#[derive(Deserialize)]
struct RawTaskItem {
    raw_text: String,
    #[serde(default = "one")]
    quantity: u32,
}

fn one() -> u32 {
    1
}

impl TryFrom<RawTaskItem> for TaskItem {
    type Error = DomainError;

    fn try_from(raw: RawTaskItem) -> Result<Self, Self::Error> {
        TaskItem::new(raw.raw_text, raw.quantity)
    }
}

impl TaskItem {
    pub fn new(raw_text: impl Into<String>, quantity: u32) -> Result<Self, DomainError> {
        let raw_text = raw_text.into();
        if raw_text.trim().is_empty() {
            return Err(DomainError::EmptyItemText);
        }
        if quantity == 0 {
            return Err(DomainError::ZeroQuantity(raw_text));
        }
        Ok(Self { raw_text, quantity })
    }

    /// Quantity-one item. Panics on blank text; meant for literals.
    pub fn single(raw_text: &str) -> Self {
        Self::new(raw_text, 1).expect("non-empty item literal")
    }
}

impl fmt::Display for TaskItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x {}", self.quantity, self.raw_text)
    }
}

/// Confirmed items against the goal items of one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    current: Vec<TaskItem>,
    target: Vec<TaskItem>,
}

impl TaskState {
    pub fn new(target: Vec<TaskItem>) -> Self {
        Self {
            current: Vec::new(),
            target,
        }
    }

    pub fn from_parts(current: Vec<TaskItem>, target: Vec<TaskItem>) -> Self {
        Self { current, target }
    }

    pub fn current(&self) -> &[TaskItem] {
        &self.current
    }

    pub fn target(&self) -> &[TaskItem] {
        &self.target
    }

    /// Same target, new current list.
    pub(crate) fn with_current(&self, current: Vec<TaskItem>) -> Self {
        Self {
            current,
            target: self.target.clone(),
        }
    }
}
