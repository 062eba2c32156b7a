//! Bundled lexicons: demographics, persona categories, names and the human
//! attribute pool. Each can be replaced by a file at runtime.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const LEXICON_JSON: &str = include_str!("../resources/lexicon.json");
const NAMES_JSON: &str = include_str!("../resources/names.json");
const ATTRIBUTE_POOL_JSON: &str = include_str!("../resources/attribute_pool.json");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed {what}: {source}")]
    Malformed {
        what: &'static str,
        source: serde_json::Error,
    },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGroup {
    pub label: String,
    pub min: u32,
    pub max: u32,
}

impl AgeGroup {
    pub fn contains(&self, age: u32) -> bool {
        (self.min..=self.max).contains(&age)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaCategory {
    pub id: String,
    pub path: Vec<String>,
    pub entity_key: String,
}

impl PersonaCategory {
    /// `Location > Residence` style label used in prompts.
    pub fn label(&self) -> String {
        self.path.join(" > ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub version: String,
    pub age_groups: Vec<AgeGroup>,
    pub genders: Vec<String>,
    pub countries: Vec<String>,
    pub persona_categories: Vec<PersonaCategory>,
}

fn read(path: &Path) -> Result<String, LexiconError> {
    std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn invalid(what: &'static str, detail: impl Into<String>) -> LexiconError {
    LexiconError::Invalid {
        what,
        detail: detail.into(),
    }
}

impl Lexicon {
    pub fn bundled() -> Self {
        Self::from_json(LEXICON_JSON).expect("bundled lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let lexicon: Lexicon = serde_json::from_str(text).map_err(|source| LexiconError::Malformed {
            what: "lexicon",
            source,
        })?;
        lexicon.check()?;
        Ok(lexicon)
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_json(&read(path)?)
    }

    fn check(&self) -> Result<(), LexiconError> {
        if self.age_groups.is_empty() || self.genders.is_empty() || self.countries.len() < 2 {
            return Err(invalid(
                "lexicon",
                "needs age groups, genders and at least two countries",
            ));
        }
        if let Some(g) = self.age_groups.iter().find(|g| g.min > g.max) {
            return Err(invalid("lexicon", format!("age group {} is empty", g.label)));
        }
        let mut ids = std::collections::HashSet::new();
        for c in &self.persona_categories {
            if !ids.insert(c.id.as_str()) {
                return Err(invalid("lexicon", format!("duplicate persona category {}", c.id)));
            }
        }
        Ok(())
    }

    pub fn age_group(&self, label: &str) -> Option<&AgeGroup> {
        self.age_groups.iter().find(|g| g.label == label)
    }

    pub fn category(&self, id: &str) -> Option<&PersonaCategory> {
        self.persona_categories.iter().find(|c| c.id == id)
    }

    pub fn has_country(&self, country: &str) -> bool {
        self.countries.iter().any(|c| c == country)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NameLists {
    pub version: String,
    pub names: BTreeMap<String, Vec<String>>,
}

impl NameLists {
    pub fn bundled() -> Self {
        Self::from_json(NAMES_JSON).expect("bundled name lists are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let lists: NameLists = serde_json::from_str(text).map_err(|source| LexiconError::Malformed {
            what: "name lists",
            source,
        })?;
        if let Some((country, _)) = lists.names.iter().find(|(_, v)| v.is_empty()) {
            return Err(invalid("name lists", format!("empty list for {country}")));
        }
        Ok(lists)
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_json(&read(path)?)
    }

    pub fn for_country(&self, country: &str) -> Option<&[String]> {
        self.names.get(country).map(Vec::as_slice)
    }
}

/// Combinations of the 23 human attribute slots. Empty values mean the slot
/// is unused for that combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributePool {
    pub version: String,
    pub slots: Vec<String>,
    pub pool: Vec<BTreeMap<String, String>>,
}

pub const SHOT_SLOT: &str = "shot";
pub const AGE_SLOT: &str = "age";
pub const GENDER_SLOT: &str = "gender";
pub const BIRTHPLACE_SLOT: &str = "birthplace";

impl AttributePool {
    pub fn bundled() -> Self {
        Self::from_json(ATTRIBUTE_POOL_JSON).expect("bundled attribute pool is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let pool: AttributePool = serde_json::from_str(text).map_err(|source| LexiconError::Malformed {
            what: "attribute pool",
            source,
        })?;
        for required in [SHOT_SLOT, AGE_SLOT, GENDER_SLOT, BIRTHPLACE_SLOT] {
            if !pool.slots.iter().any(|s| s == required) {
                return Err(invalid("attribute pool", format!("missing slot `{required}`")));
            }
        }
        for (i, entry) in pool.pool.iter().enumerate() {
            if let Some(key) = entry.keys().find(|k| !pool.slots.contains(k)) {
                return Err(invalid("attribute pool", format!("entry {i} has unknown slot `{key}`")));
            }
        }
        Ok(pool)
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_json(&read(path)?)
    }
}
