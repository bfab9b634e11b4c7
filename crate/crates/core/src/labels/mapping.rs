use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{suggest, LabelError, Suggestion, DEFAULT_SUGGESTIONS};
use crate::model::{new_id, normalize_label_text, CanonicalRecording, LabelDictionary, LabelSpan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum MappingStatus {
    Pending,
    Accepted { canonical: String },
    Rejected,
    Manual { canonical: String },
}

impl fmt::Display for MappingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingStatus::Pending => f.write_str("pending"),
            MappingStatus::Accepted { canonical } => write!(f, "accepted({canonical})"),
            MappingStatus::Rejected => f.write_str("rejected"),
            MappingStatus::Manual { canonical } => write!(f, "manual({canonical})"),
        }
    }
}

impl MappingStatus {
    pub fn is_pending(&self) -> bool {
        matches!(self, MappingStatus::Pending)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MappingStatus::Pending => "pending",
            MappingStatus::Accepted { .. } => "accepted",
            MappingStatus::Rejected => "rejected",
            MappingStatus::Manual { .. } => "manual",
        }
    }
}

/// A reviewer's verdict on one mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Decision {
    Accept { canonical: String },
    Reject,
    Manual { canonical: String },
}

impl Decision {
    fn into_status(self) -> MappingStatus {
        match self {
            Decision::Accept { canonical } => MappingStatus::Accepted { canonical },
            Decision::Reject => MappingStatus::Rejected,
            Decision::Manual { canonical } => MappingStatus::Manual { canonical },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub mapping_id: String,
    pub dataset_id: String,
    /// Normalized raw label.
    pub raw_label: String,
    pub suggestions: Vec<Suggestion>,
    pub status: MappingStatus,
    pub decided_by: Option<String>,
    pub decided_at: Option<DateTime<Utc>>,
}

/// How a raw label translates once its mapping is looked up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Canonical(String),
    Drop,
    Pending,
    Unmapped,
}

/// All mappings, keyed by id, with a (dataset, raw label) index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappingBook {
    mappings: BTreeMap<String, LabelMapping>,
    by_key: BTreeMap<(String, String), String>,
}

impl MappingBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_mappings(mappings: impl IntoIterator<Item = LabelMapping>) -> Self {
        let mut book = Self::new();
        for m in mappings {
            book.by_key
                .insert((m.dataset_id.clone(), m.raw_label.clone()), m.mapping_id.clone());
            book.mappings.insert(m.mapping_id.clone(), m);
        }
        book
    }

    pub fn get(&self, mapping_id: &str) -> Option<&LabelMapping> {
        self.mappings.get(mapping_id)
    }

    pub fn find(&self, dataset_id: &str, raw_label: &str) -> Option<&LabelMapping> {
        let key = (dataset_id.to_string(), normalize_label_text(raw_label));
        self.by_key.get(&key).and_then(|id| self.mappings.get(id))
    }

    /// Mappings filtered by dataset and status name, ordered by id.
    pub fn list(&self, dataset_id: Option<&str>, status: Option<&str>) -> Vec<&LabelMapping> {
        self.mappings
            .values()
            .filter(|m| dataset_id.is_none_or(|d| m.dataset_id == d))
            .filter(|m| status.is_none_or(|s| m.status.name() == s))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelMapping> {
        self.mappings.values()
    }

    /// Returns the mapping for `(dataset_id, raw_label)`, creating a pending
    /// one with fresh suggestions if none exists yet. The bool is true when
    /// a mapping was created.
    pub fn ensure(
        &mut self,
        dataset_id: &str,
        raw_label: &str,
        dictionary: &LabelDictionary,
    ) -> Result<(&LabelMapping, bool), LabelError> {
        let raw = normalize_label_text(raw_label);
        let key = (dataset_id.to_string(), raw.clone());
        if let Some(id) = self.by_key.get(&key) {
            return Ok((&self.mappings[id], false));
        }
        let suggestions = suggest(&raw, dictionary, DEFAULT_SUGGESTIONS)?;
        let id = new_id();
        self.by_key.insert(key, id.clone());
        let mapping = LabelMapping {
            mapping_id: id.clone(),
            dataset_id: dataset_id.to_string(),
            raw_label: raw,
            suggestions,
            status: MappingStatus::Pending,
            decided_by: None,
            decided_at: None,
        };
        Ok((self.mappings.entry(id).or_insert(mapping), true))
    }

    /// Records a decision on a pending mapping. Repeating the identical
    /// decision returns the stored mapping; any other decision on a decided
    /// mapping is refused.
    pub fn decide(
        &mut self,
        mapping_id: &str,
        decision: Decision,
        who: &str,
        dictionary: &LabelDictionary,
    ) -> Result<&LabelMapping, LabelError> {
        let mapping = self
            .mappings
            .get_mut(mapping_id)
            .ok_or_else(|| LabelError::NotFound(mapping_id.to_string()))?;
        let decision = match decision {
            Decision::Accept { canonical } => Decision::Accept { canonical: normalize_label_text(&canonical) },
            Decision::Manual { canonical } => Decision::Manual { canonical: normalize_label_text(&canonical) },
            Decision::Reject => Decision::Reject,
        };
        let status = decision.into_status();
        if !mapping.status.is_pending() {
            if mapping.status == status {
                return Ok(mapping);
            }
            return Err(LabelError::AlreadyDecided(Box::new(mapping.clone())));
        }
        if let MappingStatus::Accepted { canonical } | MappingStatus::Manual { canonical } = &status {
            if !dictionary.contains(canonical) {
                return Err(LabelError::UnknownCanonical(canonical.clone()));
            }
        }
        mapping.status = status;
        mapping.decided_by = Some(who.to_string());
        mapping.decided_at = Some(Utc::now());
        Ok(mapping)
    }

    pub fn resolve(&self, dataset_id: &str, raw_label: &str) -> Resolution {
        match self.find(dataset_id, raw_label).map(|m| &m.status) {
            None => Resolution::Unmapped,
            Some(MappingStatus::Pending) => Resolution::Pending,
            Some(MappingStatus::Rejected) => Resolution::Drop,
            Some(MappingStatus::Accepted { canonical } | MappingStatus::Manual { canonical }) => {
                Resolution::Canonical(canonical.clone())
            }
        }
    }
}

/// Rewrites the raw spans of a dataset's staged recordings to canonical
/// labels. Spans of rejected raw labels are removed. Fails without touching
/// anything if any raw label is still pending or has no mapping.
///
/// Returns the rewritten recordings and the number of relabeled spans.
pub fn apply_mappings(
    book: &MappingBook,
    dataset_id: &str,
    staged: &[CanonicalRecording],
) -> Result<(Vec<CanonicalRecording>, usize), LabelError> {
    let mut unresolved = BTreeSet::new();
    for rec in staged {
        for span in &rec.label_spans {
            if matches!(
                book.resolve(dataset_id, &span.label),
                Resolution::Pending | Resolution::Unmapped
            ) {
                unresolved.insert(normalize_label_text(&span.label));
            }
        }
    }
    if !unresolved.is_empty() {
        return Err(LabelError::PendingMappingsRemain(unresolved.into_iter().collect()));
    }
    let mut relabeled = 0;
    let out = staged
        .iter()
        .map(|rec| {
            let spans: Vec<LabelSpan> = rec
                .label_spans
                .iter()
                .filter_map(|span| match book.resolve(dataset_id, &span.label) {
                    Resolution::Canonical(c) => {
                        relabeled += 1;
                        Some(LabelSpan::new(span.start, span.end, c))
                    }
                    _ => None,
                })
                .collect();
            CanonicalRecording {
                label_spans: spans,
                ..rec.clone()
            }
        })
        .collect();
    Ok((out, relabeled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SensorKind, CANONICAL_RATE_HZ};

    fn staged(spans: &[(usize, usize, &str)]) -> CanonicalRecording {
        CanonicalRecording {
            recording_id: new_id(),
            dataset_id: "ds".into(),
            subject_id: "1".into(),
            sensor_kind: SensorKind::Accelerometer,
            rate_hz: CANONICAL_RATE_HZ,
            includes_gravity: true,
            samples: vec![[0.0; 3]; 100],
            label_spans: spans.iter().map(|(s, e, l)| LabelSpan::new(*s, *e, *l)).collect(),
        }
    }

    fn accept(c: &str) -> Decision {
        Decision::Accept { canonical: c.into() }
    }

    #[test]
    fn accept_sitting_as_sit_down() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let id = book.ensure("ds", "sitting", &dict).unwrap().0.mapping_id.clone();
        let m = book.decide(&id, accept("sit_down"), "rev", &dict).unwrap();
        assert_eq!(m.status, MappingStatus::Accepted { canonical: "sit_down".into() });
        assert_eq!(m.decided_by.as_deref(), Some("rev"));
    }

    #[test]
    fn repeat_and_conflict() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let id = book.ensure("ds", "sitting", &dict).unwrap().0.mapping_id.clone();
        let first = book.decide(&id, accept("sit_down"), "a", &dict).unwrap().clone();
        let again = book.decide(&id, accept("sit_down"), "b", &dict).unwrap();
        assert_eq!(*again, first);
        let err = book.decide(&id, accept("sitting"), "b", &dict).unwrap_err();
        assert!(matches!(err, LabelError::AlreadyDecided(m) if m.status == first.status));
        assert!(matches!(book.decide(&id, Decision::Reject, "b", &dict), Err(LabelError::AlreadyDecided(_))));
    }

    #[test]
    fn unknown_canonical_leaves_mapping_pending() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let id = book.ensure("ds", "fall", &dict).unwrap().0.mapping_id.clone();
        let err = book.decide(&id, Decision::Manual { canonical: "falling".into() }, "r", &dict).unwrap_err();
        assert_eq!(err, LabelError::UnknownCanonical("falling".into()));
        assert!(book.get(&id).unwrap().status.is_pending());
        assert_eq!(book.decide("nope", Decision::Reject, "r", &dict), Err(LabelError::NotFound("nope".into())));
    }

    #[test]
    fn mappings_are_per_dataset() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let (a, created_a) = book.ensure("d1", "Sitting", &dict).map(|(m, c)| (m.mapping_id.clone(), c)).unwrap();
        let (b, created_b) = book.ensure("d2", "sitting", &dict).map(|(m, c)| (m.mapping_id.clone(), c)).unwrap();
        let (a2, created_a2) = book.ensure("d1", "SITTING ", &dict).map(|(m, c)| (m.mapping_id.clone(), c)).unwrap();
        assert!(created_a && created_b && !created_a2);
        assert_ne!(a, b);
        assert_eq!(a, a2);
        assert_eq!(book.list(Some("d1"), Some("pending")).len(), 1);
    }

    #[test]
    fn apply_rewrites_all_spans() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let recs = vec![staged(&[(0, 50, "walk"), (50, 100, "sit")]), staged(&[(0, 100, "walk")])];
        for (raw, c) in [("walk", "walking"), ("sit", "sitting")] {
            let id = book.ensure("ds", raw, &dict).unwrap().0.mapping_id.clone();
            book.decide(&id, accept(c), "r", &dict).unwrap();
        }
        let (out, n) = apply_mappings(&book, "ds", &recs).unwrap();
        assert_eq!(n, 3);
        assert_eq!(out[0].label_spans, vec![LabelSpan::new(0, 50, "walking"), LabelSpan::new(50, 100, "sitting")]);
        assert!(out.iter().all(|r| r.check(Some(&dict)).is_empty()));
    }

    #[test]
    fn pending_blocks_apply() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let recs = vec![staged(&[(0, 50, "walk"), (50, 100, "sit")])];
        let id = book.ensure("ds", "walk", &dict).unwrap().0.mapping_id.clone();
        book.decide(&id, accept("walking"), "r", &dict).unwrap();
        book.ensure("ds", "sit", &dict).unwrap();
        assert_eq!(
            apply_mappings(&book, "ds", &recs),
            Err(LabelError::PendingMappingsRemain(vec!["sit".into()]))
        );
    }

    #[test]
    fn rejected_spans_are_dropped() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let recs = vec![
            staged(&[(0, 30, "walk"), (30, 60, "junk"), (60, 100, "walk")]),
            staged(&[(0, 100, "junk")]),
        ];
        let total_before: usize = recs.iter().map(|r| r.label_spans.len()).sum();
        let junk_before: usize = recs.iter().flat_map(|r| &r.label_spans).filter(|s| s.label == "junk").count();
        let id = book.ensure("ds", "walk", &dict).unwrap().0.mapping_id.clone();
        book.decide(&id, accept("walking"), "r", &dict).unwrap();
        let id = book.ensure("ds", "junk", &dict).unwrap().0.mapping_id.clone();
        book.decide(&id, Decision::Reject, "r", &dict).unwrap();
        let (out, n) = apply_mappings(&book, "ds", &recs).unwrap();
        assert_eq!(n, total_before - junk_before);
        assert_eq!(out[0].label_spans.len(), 2);
        assert!(!out[1].is_labeled());
    }

    #[test]
    fn book_survives_json() {
        let dict = LabelDictionary::seed();
        let mut book = MappingBook::new();
        let id = book.ensure("ds", "walk", &dict).unwrap().0.mapping_id.clone();
        book.decide(&id, accept("walking"), "r", &dict).unwrap();
        let all: Vec<LabelMapping> = book.iter().cloned().collect();
        let json = serde_json::to_string(&all).unwrap();
        let back = MappingBook::from_mappings(serde_json::from_str::<Vec<LabelMapping>>(&json).unwrap());
        assert_eq!(back.resolve("ds", "Walk"), Resolution::Canonical("walking".into()));
    }
}
