use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use tracing::info;

use super::HarnessError;
use crate::domain::{
    validate_test_case, DomainError, MatchRules, Menu, Normalizer, Persona, QuantityMode, TestCase,
    DEFAULT_FILLERS,
};

pub const MENU_FILE: &str = "menu.json";
pub const PERSONAS_FILE: &str = "personas.json";
pub const TEST_CASES_FILE: &str = "testcases.json";
pub const MATCHING_FILE: &str = "matching.json";

/// A validated scenario bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenarios {
    pub personas: Vec<Persona>,
    pub menu: Menu,
    pub test_cases: Vec<TestCase>,
    pub rules: MatchRules,
}

impl Scenarios {
    pub fn persona(&self, id: &str) -> Option<&Persona> {
        self.personas.iter().find(|p| p.id == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchingFile {
    #[serde(default)]
    fillers: Option<Vec<String>>,
    #[serde(default)]
    quantities: QuantityMode,
}

fn read_json<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<T, HarnessError> {
    let path = dir.join(file);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(HarnessError::MissingFile(path))
        }
        Err(e) => return Err(HarnessError::Io { path, source: e }),
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Schema {
        file: path,
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn invalid<'a>(dir: &'a Path, file: &str) -> impl Fn(DomainError) -> HarnessError + 'a {
    let file = file.to_owned();
    move |source| HarnessError::Invalid {
        file: dir.join(&file),
        source,
    }
}

/// Reads and validates `menu.json`, `personas.json` and `testcases.json`,
/// plus an optional `matching.json` overriding the filler list and the
/// quantity mode.
pub fn load_scenarios(dir: &Path) -> Result<Scenarios, HarnessError> {
    let rules = if dir.join(MATCHING_FILE).exists() {
        let m: MatchingFile = read_json(dir, MATCHING_FILE)?;
        let normalizer = match m.fillers {
            Some(f) => Normalizer::new(f),
            None => Normalizer::new(DEFAULT_FILLERS.iter().copied()),
        };
        MatchRules::new(normalizer, m.quantities)
    } else {
        MatchRules::default()
    };

    let menu: Menu = read_json(dir, MENU_FILE)?;
    menu.validate(&rules.normalizer)
        .map_err(invalid(dir, MENU_FILE))?;

    let personas: Vec<Persona> = read_json(dir, PERSONAS_FILE)?;
    let mut ids = BTreeSet::new();
    for p in &personas {
        p.validate().map_err(invalid(dir, PERSONAS_FILE))?;
        if !ids.insert(p.id.as_str()) {
            return Err(invalid(dir, PERSONAS_FILE)(DomainError::Duplicate {
                kind: "persona",
                name: p.id.clone(),
            }));
        }
    }

    let raw: Vec<TestCase> = read_json(dir, TEST_CASES_FILE)?;
    let mut ids = BTreeSet::new();
    let mut test_cases = Vec::with_capacity(raw.len());
    for tc in raw {
        if !ids.insert(tc.id.clone()) {
            return Err(invalid(dir, TEST_CASES_FILE)(DomainError::Duplicate {
                kind: "test case",
                name: tc.id,
            }));
        }
        test_cases.push(
            validate_test_case(tc, &personas, &menu, &rules.normalizer)
                .map_err(invalid(dir, TEST_CASES_FILE))?,
        );
    }

    info!(
        personas = personas.len(),
        menu_items = menu.items.len(),
        test_cases = test_cases.len(),
        "scenarios loaded from {}",
        dir.display()
    );
    Ok(Scenarios {
        personas,
        menu,
        test_cases,
        rules,
    })
}
