//! Label consolidation: ranked suggestions for raw labels, the reviewer's
//! decisions, and the rewrite of staged spans onto canonical labels.
//!
//! Nothing is ever accepted automatically. Every (dataset, raw label) pair
//! becomes a [`LabelMapping`] that stays pending until a person decides it.

mod mapping;
mod suggest;

use thiserror::Error;

pub use mapping::{apply_mappings, Decision, LabelMapping, MappingBook, MappingStatus, Resolution};
pub use suggest::{similarity, suggest, ScoreBasis, Suggestion};

/// Suggestions stored with each new mapping.
pub const DEFAULT_SUGGESTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("the label dictionary is empty")]
    EmptyDictionary,
    #[error("no mapping with id {0:?}")]
    NotFound(String),
    #[error("mapping {} was already decided as {}", .0.mapping_id, .0.status)]
    AlreadyDecided(Box<LabelMapping>),
    #[error("{0:?} is not a canonical label")]
    UnknownCanonical(String),
    #[error("raw labels still pending review: {}", .0.join(", "))]
    PendingMappingsRemain(Vec<String>),
}
