use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::LabelError;
use crate::model::{normalize_label_text, LabelDictionary};

/// `1 - levenshtein(a, b) / max(len(a), len(b))` over characters; two empty
/// strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    ExactAlias,
    StringSimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub canonical: String,
    pub score: f64,
    pub basis: ScoreBasis,
}

/// Ranks canonical labels for a raw label.
///
/// A canonical scores the best similarity between the raw text and its name
/// or any alias; an exact name/alias hit scores 1.0 with basis `ExactAlias`.
/// Ordered by score descending, then canonical name ascending.
pub fn suggest(raw_label: &str, dictionary: &LabelDictionary, k: usize) -> Result<Vec<Suggestion>, LabelError> {
    if dictionary.is_empty() {
        return Err(LabelError::EmptyDictionary);
    }
    let k = k.max(1);
    let raw = normalize_label_text(raw_label);
    let mut scored: Vec<Suggestion> = dictionary
        .iter()
        .map(|(name, entry)| {
            let exact = raw == name || entry.aliases.contains(&raw);
            if exact {
                return Suggestion {
                    canonical: name.to_string(),
                    score: 1.0,
                    basis: ScoreBasis::ExactAlias,
                };
            }
            let score = std::iter::once(name)
                .chain(entry.aliases.iter().map(String::as_str))
                .map(|candidate| similarity(&raw, candidate))
                .fold(0.0, f64::max);
            Suggestion {
                canonical: name.to_string(),
                score,
                basis: ScoreBasis::StringSimilarity,
            }
        })
        .collect();
    scored.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.canonical.cmp(&b.canonical),
        other => other,
    });
    scored.truncate(k);
    Ok(scored)
}
