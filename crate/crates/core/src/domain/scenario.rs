use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::attributes::ExpectedAttributes;
use super::item::{Normalizer, TaskItem};
use super::DomainError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub name: String,
    pub biography: String,
    pub expected_attributes: ExpectedAttributes,
}

impl Persona {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.biography.trim().is_empty() {
            return Err(DomainError::EmptyBiography(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuItem {
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub modifiers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Menu {
    pub items: Vec<MenuItem>,
}

impl Menu {
    /// Rejects names that collide after normalization.
    pub fn validate(&self, normalizer: &Normalizer) -> Result<(), DomainError> {
        let mut seen = BTreeSet::new();
        for item in &self.items {
            let key = normalizer.normalize(&item.name);
            if key.is_empty() || !seen.insert(key) {
                return Err(DomainError::Duplicate {
                    kind: "menu item",
                    name: item.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Categories in order of first appearance.
    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for item in &self.items {
            if !out.contains(&item.category.as_str()) {
                out.push(&item.category);
            }
        }
        out
    }

    pub fn in_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a MenuItem> + 'a {
        self.items.iter().filter(move |i| i.category == category)
    }

    pub fn find(&self, name: &str, normalizer: &Normalizer) -> Option<&MenuItem> {
        let wanted = normalizer.normalize(name);
        self.items
            .iter()
            .find(|i| normalizer.normalize(&i.name) == wanted)
    }

    /// Resolves a task item written as `"name, modifier, modifier"`: the first
    /// comma segment must name a menu item and every other segment must be one
    /// of that item's modifiers.
    pub fn lookup(&self, item: &TaskItem, normalizer: &Normalizer) -> Option<&MenuItem> {
        let mut segments = item.raw_text.split(',');
        let entry = self.find(segments.next()?, normalizer)?;
        let modifiers: Vec<_> = entry
            .modifiers
            .iter()
            .map(|m| normalizer.normalize(m))
            .collect();
        for segment in segments {
            let seg = normalizer.normalize(segment);
            if seg.is_empty() {
                continue;
            }
            if !modifiers.contains(&seg) {
                return None;
            }
        }
        Some(entry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Simple,
    Medium,
    Complex,
}

/// A persona paired with the order it should place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub persona_id: String,
    pub target: Vec<TaskItem>,
    pub complexity: Complexity,
}

pub fn validate_test_case(
    tc: TestCase,
    personas: &[Persona],
    menu: &Menu,
    normalizer: &Normalizer,
) -> Result<TestCase, DomainError> {
    if !personas.iter().any(|p| p.id == tc.persona_id) {
        return Err(DomainError::UnknownPersona {
            test_case: tc.id.clone(),
            persona_id: tc.persona_id.clone(),
        });
    }
    if tc.target.is_empty() {
        return Err(DomainError::EmptyTarget(tc.id.clone()));
    }
    if let Some(bad) = tc
        .target
        .iter()
        .find(|i| menu.lookup(i, normalizer).is_none())
    {
        return Err(DomainError::OffMenuItem {
            test_case: tc.id.clone(),
            item: bad.raw_text.clone(),
        });
    }
    Ok(tc)
}
