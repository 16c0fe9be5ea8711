//! Rule-based text handling shared by the scripted components: menu mention
//! scanning and the `"<n>x <item>; <n>x <item>"` item-list format.

use std::sync::LazyLock;

use regex::Regex;

use crate::domain::{Menu, Normalizer, TaskItem};

const NUMBER_WORDS: &[(&str, u32)] = &[
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
];

/// Quantity written as `3`, `3x` or `three`.
pub fn quantity_token(token: &str) -> Option<u32> {
    if let Some((_, n)) = NUMBER_WORDS.iter().find(|(w, _)| *w == token) {
        return Some(*n);
    }
    let digits = token.strip_suffix('x').unwrap_or(token);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|n| *n > 0)
}

pub fn quantity_word(n: u32) -> String {
    NUMBER_WORDS
        .iter()
        .find(|(_, v)| *v == n)
        .map(|(w, _)| (*w).to_owned())
        .unwrap_or_else(|| n.to_string())
}

/// `"1x veggie burger, no onions; 2x small fries"`.
pub fn render_items(items: &[TaskItem]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

static QTY_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)(\d+)\s*x\s+(.+)$").expect("valid regex"));

/// Parses one entry of an item list, accepting `2x fries`, `two fries`,
/// `a fries` and `the fries`.
pub fn parse_item(entry: &str) -> Option<TaskItem> {
    let entry = entry.trim().trim_end_matches(['.', '!', '?', ',']).trim();
    if let Some(caps) = QTY_PREFIX.captures(entry) {
        let qty: u32 = caps[1].parse().ok()?;
        return TaskItem::new(caps[2].trim(), qty).ok();
    }
    let (first, rest) = entry.split_once(char::is_whitespace).unwrap_or((entry, ""));
    let lower = first.to_lowercase();
    let (qty, text) = match lower.as_str() {
        "a" | "an" | "the" => (1, rest),
        w => match quantity_token(w) {
            Some(n) if !rest.trim().is_empty() => (n, rest),
            _ => (1, entry),
        },
    };
    TaskItem::new(text.trim(), qty).ok()
}

pub fn parse_item_list(list: &str) -> Vec<TaskItem> {
    list.split(';').filter_map(parse_item).collect()
}

/// A change to an order as announced in an ordering-system message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderEvent {
    Added(Vec<TaskItem>),
    Removed(Vec<TaskItem>),
    Cleared,
}

static ADDED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\badded (.+?) to your order").expect("valid regex"));
static REMOVED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bremoved (.+?)(?: from your order| as requested)").expect("valid regex")
});
static CLEARED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:cleared|emptied) your order").expect("valid regex"));

/// Order changes announced in `message`, in textual order.
pub fn order_events(message: &str) -> Vec<OrderEvent> {
    let mut found: Vec<(usize, OrderEvent)> = Vec::new();
    for caps in ADDED.captures_iter(message) {
        let m = caps.get(0).expect("whole match");
        found.push((m.start(), OrderEvent::Added(parse_item_list(&caps[1]))));
    }
    for caps in REMOVED.captures_iter(message) {
        let m = caps.get(0).expect("whole match");
        found.push((m.start(), OrderEvent::Removed(parse_item_list(&caps[1]))));
    }
    for m in CLEARED.find_iter(message) {
        found.push((m.start(), OrderEvent::Cleared));
    }
    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, e)| e).collect()
}

/// What a free-text message says about the menu.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scan {
    /// Recognized items in order of mention, in canonical `name, modifier` form.
    pub items: Vec<TaskItem>,
    /// Short names that fit several menu items, with the candidates.
    pub ambiguous: Vec<(String, Vec<String>)>,
    /// Categories mentioned outside item names.
    pub categories: Vec<String>,
}

struct IndexedItem {
    name: String,
    tokens: Vec<String>,
    modifiers: Vec<(String, Vec<String>)>,
}

/// Precomputed token view of a menu for scanning free text.
pub struct MenuIndex {
    normalizer: Normalizer,
    items: Vec<IndexedItem>,
    categories: Vec<(String, Vec<String>)>,
}

impl MenuIndex {
    pub fn new(menu: &Menu, normalizer: &Normalizer) -> Self {
        let items = menu
            .items
            .iter()
            .map(|i| IndexedItem {
                name: i.name.clone(),
                tokens: normalizer.tokens(&i.name),
                modifiers: i
                    .modifiers
                    .iter()
                    .map(|m| (m.clone(), normalizer.tokens(m)))
                    .filter(|(_, t)| !t.is_empty())
                    .collect(),
            })
            .collect();
        let categories = menu
            .categories()
            .into_iter()
            .map(|c| (c.to_owned(), normalizer.tokens(c)))
            .collect();
        Self {
            normalizer: normalizer.clone(),
            items,
            categories,
        }
    }

    /// Last name token of `name`, usable as a short name when it is not
    /// itself a full menu item name.
    pub fn short_name(&self, name: &str) -> Option<String> {
        let tokens = self.normalizer.tokens(name);
        if tokens.len() < 2 {
            return None;
        }
        let last = tokens.last()?.clone();
        let clashes = self.items.iter().any(|i| i.tokens == [last.clone()]);
        (!clashes).then_some(last)
    }

    pub fn is_menu_name(&self, text: &str) -> bool {
        let tokens = self.normalizer.tokens(text);
        self.items.iter().any(|i| i.tokens == tokens)
    }

    fn longest_name_at(&self, tokens: &[String], at: usize) -> Option<(usize, usize)> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, i)| !i.tokens.is_empty() && tokens[at..].starts_with(&i.tokens))
            .max_by_key(|(_, i)| i.tokens.len())
            .map(|(idx, i)| (idx, i.tokens.len()))
    }

    fn longest_modifier_at(
        &self,
        item: usize,
        tokens: &[String],
        at: usize,
    ) -> Option<(usize, usize)> {
        self.items[item]
            .modifiers
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| tokens[at..].starts_with(t))
            .max_by_key(|(_, (_, t))| t.len())
            .map(|(idx, (_, t))| (idx, t.len()))
    }

    fn items_ending_with(&self, token: &str) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, i)| i.tokens.len() > 1 && i.tokens.last().is_some_and(|t| t == token))
            .map(|(idx, _)| idx)
            .collect()
    }

    fn category_at(&self, tokens: &[String], at: usize) -> Option<(usize, usize)> {
        self.categories
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| !t.is_empty() && tokens[at..].starts_with(t))
            .max_by_key(|(_, (_, t))| t.len())
            .map(|(idx, (_, t))| (idx, t.len()))
    }

    /// Greedy left-to-right scan: longest full item name first, then that
    /// item's modifiers, then short names, then categories. A quantity
    /// token directly before an item applies to it.
    pub fn scan(&self, text: &str) -> Scan {
        let tokens = self.normalizer.tokens(text);
        let mut scan = Scan::default();
        let mut pending_qty: Option<u32> = None;
        let mut i = 0;
        while i < tokens.len() {
            let resolved = match self.longest_name_at(&tokens, i) {
                Some((idx, len)) => Some((idx, len)),
                None => {
                    let candidates = self.items_ending_with(&tokens[i]);
                    match candidates.len() {
                        0 => None,
                        1 => Some((candidates[0], 1)),
                        _ => {
                            scan.ambiguous.push((
                                tokens[i].clone(),
                                candidates
                                    .iter()
                                    .map(|c| self.items[*c].name.clone())
                                    .collect(),
                            ));
                            pending_qty = None;
                            i += 1;
                            continue;
                        }
                    }
                }
            };
            if let Some((idx, len)) = resolved {
                i += len;
                let mut text = self.items[idx].name.clone();
                while i < tokens.len() {
                    match self.longest_modifier_at(idx, &tokens, i) {
                        Some((m, mlen)) => {
                            text.push_str(", ");
                            text.push_str(&self.items[idx].modifiers[m].0);
                            i += mlen;
                        }
                        None => break,
                    }
                }
                let qty = pending_qty.take().unwrap_or(1);
                if let Ok(item) = TaskItem::new(text, qty) {
                    scan.items.push(item);
                }
                continue;
            }
            if let Some(q) = quantity_token(&tokens[i]) {
                pending_qty = Some(q);
                i += 1;
                continue;
            }
            if let Some((c, len)) = self.category_at(&tokens, i) {
                let name = self.categories[c].0.clone();
                if !scan.categories.contains(&name) {
                    scan.categories.push(name);
                }
                i += len;
                pending_qty = None;
                continue;
            }
            pending_qty = None;
            i += 1;
        }
        scan
    }
}
