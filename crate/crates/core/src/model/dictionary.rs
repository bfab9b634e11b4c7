use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{line_of, normalize_label_text};

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("dictionary syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("canonical label {0:?} already exists")]
    DuplicateCanonical(String),
    #[error("alias {alias:?} already belongs to {owner:?}")]
    AliasConflict { alias: String, owner: String },
    #[error("label name is empty after normalization")]
    EmptyName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    State,
    Transition,
    Fall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    #[serde(default)]
    pub description: String,
    pub kind: LabelKind,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// The canonical label vocabulary.
///
/// Canonical names and aliases are stored normalized; every lookup normalizes
/// its argument first, so lookups are case- and separator-insensitive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelDictionary {
    entries: BTreeMap<String, LabelEntry>,
    // normalized name or alias -> canonical
    index: HashMap<String, String>,
}

const SEED: &str = include_str!("../../data/seed_dictionary.toml");

impl LabelDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The 17-label vocabulary shipped with the platform.
    pub fn seed() -> Self {
        Self::from_toml(SEED).expect("seed dictionary is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, DictionaryError> {
        let tables: BTreeMap<String, LabelEntry> =
            toml::from_str(text).map_err(|e| DictionaryError::Syntax {
                line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
                message: e.message().to_string(),
            })?;
        let mut dict = Self::new();
        for (name, entry) in tables {
            dict.insert(&name, entry)?;
        }
        Ok(dict)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.entries).expect("dictionary entries serialize")
    }

    /// Adds a canonical label. The name and every alias are normalized; the
    /// insert fails without side effects if any of them is already taken.
    pub fn insert(&mut self, name: &str, mut entry: LabelEntry) -> Result<(), DictionaryError> {
        let name = normalize_label_text(name);
        if name.is_empty() {
            return Err(DictionaryError::EmptyName);
        }
        if self.entries.contains_key(&name) {
            return Err(DictionaryError::DuplicateCanonical(name));
        }
        if let Some(owner) = self.index.get(&name) {
            return Err(DictionaryError::AliasConflict {
                alias: name,
                owner: owner.clone(),
            });
        }
        let mut aliases: Vec<String> = Vec::new();
        for alias in &entry.aliases {
            let alias = normalize_label_text(alias);
            if alias.is_empty() || alias == name || aliases.contains(&alias) {
                continue;
            }
            if let Some(owner) = self.index.get(&alias) {
                return Err(DictionaryError::AliasConflict {
                    alias,
                    owner: owner.clone(),
                });
            }
            aliases.push(alias);
        }
        self.index.insert(name.clone(), name.clone());
        for alias in &aliases {
            self.index.insert(alias.clone(), name.clone());
        }
        entry.aliases = aliases;
        self.entries.insert(name, entry);
        Ok(())
    }

    /// True if `label` is a canonical name (not merely an alias).
    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(&normalize_label_text(label))
    }

    /// Canonical label that `text` names, directly or through an alias.
    pub fn resolve(&self, text: &str) -> Option<&str> {
        self.index.get(&normalize_label_text(text)).map(String::as_str)
    }

    pub fn get(&self, label: &str) -> Option<&LabelEntry> {
        self.entries.get(&normalize_label_text(label))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LabelEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(kind: LabelKind, aliases: &[&str]) -> LabelEntry {
        LabelEntry {
            description: String::new(),
            kind,
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn seed_has_seventeen_labels() {
        let d = LabelDictionary::seed();
        assert_eq!(d.len(), 17);
        for l in [
            "walking", "running", "sitting", "sit_down", "stand_up", "standing", "lying",
            "lie_down", "stairs_up", "stairs_down", "jumping", "cycling", "bending",
            "fall_forward", "fall_backward", "fall_lateral", "transition_other",
        ] {
            assert!(d.contains(l), "{l}");
        }
        assert_eq!(d.get("fall_lateral").unwrap().kind, LabelKind::Fall);
    }

    #[test]
    fn lookups_are_normalized() {
        let mut d = LabelDictionary::new();
        d.insert("Sit Down", entry(LabelKind::Transition, &["Sitting-Down"])).unwrap();
        assert!(d.contains("SIT_DOWN"));
        assert_eq!(d.resolve("  sitting down "), Some("sit_down"));
        assert!(!d.contains("sitting_down"));
    }

    #[test]
    fn alias_cannot_belong_to_two_labels() {
        let mut d = LabelDictionary::new();
        d.insert("sitting", entry(LabelKind::State, &["seated"])).unwrap();
        let err = d.insert("sit_down", entry(LabelKind::Transition, &["seated"])).unwrap_err();
        assert_eq!(
            err,
            DictionaryError::AliasConflict { alias: "seated".into(), owner: "sitting".into() }
        );
        assert!(!d.contains("sit_down"));
        assert_eq!(
            d.insert("Sitting", entry(LabelKind::State, &[])),
            Err(DictionaryError::DuplicateCanonical("sitting".into()))
        );
        assert!(d.insert("seated", entry(LabelKind::State, &[])).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let d = LabelDictionary::seed();
        let again = LabelDictionary::from_toml(&d.to_toml()).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = LabelDictionary::from_toml("[walking]\nkind = \"state\"\n[running]\nkind = \n").unwrap_err();
        assert!(matches!(err, DictionaryError::Syntax { line: 4, .. }), "{err:?}");
    }
}
