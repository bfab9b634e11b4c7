//! Canonical data types shared by every stage. No I/O happens here.

mod dictionary;
mod text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dictionary::{DictionaryError, LabelDictionary, LabelEntry, LabelKind};
pub(crate) use text::line_of;
pub use text::normalize_label_text;

/// Rate every canonical recording is stored at.
pub const CANONICAL_RATE_HZ: f64 = 50.0;

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// One tri-axial sample `(x, y, z)`.
pub type Sample = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Accelerometer,
    Gyroscope,
}

impl SensorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Accelerometer => "accelerometer",
            SensorKind::Gyroscope => "gyroscope",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accelerometer" => Ok(SensorKind::Accelerometer),
            "gyroscope" => Ok(SensorKind::Gyroscope),
            other => Err(format!("unknown sensor kind {other:?}")),
        }
    }
}

/// Unit the source dataset stores its samples in.
///
/// Textual form: `m_per_s2`, `g`, `milli_g` or `raw_counts:<g per count>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DeclaredUnit {
    MPerS2,
    G,
    MilliG,
    RawCounts { scale: f64 },
}

impl DeclaredUnit {
    /// Multiplier that takes a value in this unit to m/s².
    pub fn to_si_factor(self) -> f64 {
        match self {
            DeclaredUnit::MPerS2 => 1.0,
            DeclaredUnit::G => STANDARD_GRAVITY,
            DeclaredUnit::MilliG => STANDARD_GRAVITY * 1e-3,
            DeclaredUnit::RawCounts { scale } => scale * STANDARD_GRAVITY,
        }
    }
}

impl fmt::Display for DeclaredUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeclaredUnit::MPerS2 => f.write_str("m_per_s2"),
            DeclaredUnit::G => f.write_str("g"),
            DeclaredUnit::MilliG => f.write_str("milli_g"),
            DeclaredUnit::RawCounts { scale } => write!(f, "raw_counts:{scale}"),
        }
    }
}

impl FromStr for DeclaredUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "m_per_s2" => Ok(DeclaredUnit::MPerS2),
            "g" => Ok(DeclaredUnit::G),
            "milli_g" => Ok(DeclaredUnit::MilliG),
            other => {
                let scale = other
                    .strip_prefix("raw_counts:")
                    .ok_or_else(|| format!("unknown unit {other:?}"))?;
                let scale: f64 = scale
                    .trim()
                    .parse()
                    .map_err(|_| format!("invalid raw_counts scale {scale:?}"))?;
                if !scale.is_finite() || scale <= 0.0 {
                    return Err(format!("raw_counts scale must be positive, got {scale}"));
                }
                Ok(DeclaredUnit::RawCounts { scale })
            }
        }
    }
}

impl TryFrom<String> for DeclaredUnit {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<DeclaredUnit> for String {
    fn from(value: DeclaredUnit) -> Self {
        value.to_string()
    }
}

/// How sample instants are known: a fixed rate, or one timestamp (seconds) per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTiming {
    Rate(f64),
    Timestamps(Vec<f64>),
}

/// Half-open index range `[start, end)` carrying a label.
///
/// Serialized as the array `[start, end, "label"]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, String)", into = "(usize, usize, String)")]
pub struct LabelSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabelSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of indices shared with `[start, end)`.
    pub fn overlap(&self, start: usize, end: usize) -> usize {
        self.end.min(end).saturating_sub(self.start.max(start))
    }
}

impl From<(usize, usize, String)> for LabelSpan {
    fn from((start, end, label): (usize, usize, String)) -> Self {
        Self { start, end, label }
    }
}

impl From<LabelSpan> for (usize, usize, String) {
    fn from(span: LabelSpan) -> Self {
        (span.start, span.end, span.label)
    }
}

/// A trace exactly as a driver read it from a foreign dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub dataset_id: String,
    pub source_path: String,
    pub subject_id: String,
    pub sensor_kind: SensorKind,
    pub declared_unit: DeclaredUnit,
    pub timing: SampleTiming,
    pub includes_gravity: bool,
    pub samples: Vec<Sample>,
    pub raw_label_spans: Vec<LabelSpan>,
}

/// A trace in m/s² on the canonical 50 Hz grid starting at t = 0.
///
/// Between alignment and label finalization the spans carry raw labels; once
/// stored they carry canonical labels only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecording {
    pub recording_id: String,
    pub dataset_id: String,
    pub subject_id: String,
    pub sensor_kind: SensorKind,
    pub rate_hz: f64,
    pub includes_gravity: bool,
    pub samples: Vec<Sample>,
    pub label_spans: Vec<LabelSpan>,
}

impl CanonicalRecording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    pub fn is_labeled(&self) -> bool {
        !self.label_spans.is_empty()
    }

    /// Label covering sample `index`, if any.
    pub fn label_at(&self, index: usize) -> Option<&str> {
        self.label_spans
            .iter()
            .find(|s| s.start <= index && index < s.end)
            .map(|s| s.label.as_str())
    }

    /// Checks the canonical invariants; with a dictionary, also that every
    /// span label is a canonical label.
    pub fn check(&self, dictionary: Option<&LabelDictionary>) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rate_hz != CANONICAL_RATE_HZ {
            out.push(Violation::new("rate_hz", None, ViolationKind::NotCanonicalRate));
        }
        check_samples(&self.samples, &mut out);
        let mut prev_end = 0;
        for (i, span) in self.label_spans.iter().enumerate() {
            if span.start >= span.end || span.end > self.samples.len() {
                out.push(Violation::new("label_spans", Some(i), ViolationKind::SpanOutOfBounds));
            } else if span.start < prev_end {
                out.push(Violation::new("label_spans", Some(i), ViolationKind::SpanOverlap));
            }
            prev_end = prev_end.max(span.end);
            if let Some(dict) = dictionary {
                if !dict.contains(&span.label) {
                    out.push(Violation::new("label_spans", Some(i), ViolationKind::UnknownLabel));
                }
            }
        }
        out
    }
}

/// One fixed-length frame cut from a canonical recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub recording_id: String,
    pub start_index: usize,
    pub label: String,
    pub data: Vec<Sample>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptySamples,
    NonFinite,
    NonMonotonicTimestamps,
    TimestampCountMismatch,
    InvalidRate,
    SpanOutOfBounds,
    SpanOverlap,
    EmptyLabel,
    NotCanonicalRate,
    UnknownLabel,
}

/// A broken invariant, located by field and (where relevant) element index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub kind: ViolationKind,
}

impl Violation {
    pub fn new(field: &str, index: Option<usize>, kind: ViolationKind) -> Self {
        Self {
            field: field.to_string(),
            index,
            kind,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {:?}", self.field, i, self.kind),
            None => write!(f, "{}: {:?}", self.field, self.kind),
        }
    }
}

fn check_samples(samples: &[Sample], out: &mut Vec<Violation>) {
    if samples.is_empty() {
        out.push(Violation::new("samples", None, ViolationKind::EmptySamples));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("samples", Some(i), ViolationKind::NonFinite));
        }
    }
}

/// Lists every broken [`RawRecording`] invariant. An empty list means the
/// recording is accepted by every aligner stage.
pub fn validate_raw(rec: &RawRecording) -> Vec<Violation> {
    let mut out = Vec::new();
    check_samples(&rec.samples, &mut out);
    match &rec.timing {
        SampleTiming::Rate(hz) => {
            if !(hz.is_finite() && *hz > 0.0) {
                out.push(Violation::new("timing", None, ViolationKind::InvalidRate));
            }
        }
        SampleTiming::Timestamps(ts) => {
            if ts.len() != rec.samples.len() {
                out.push(Violation::new("timing", None, ViolationKind::TimestampCountMismatch));
            }
            for (i, t) in ts.iter().enumerate() {
                if !t.is_finite() {
                    out.push(Violation::new("timing", Some(i), ViolationKind::NonFinite));
                } else if i > 0 && t.partial_cmp(&ts[i - 1]) != Some(std::cmp::Ordering::Greater) {
                    out.push(Violation::new("timing", Some(i), ViolationKind::NonMonotonicTimestamps));
                }
            }
        }
    }
    for (i, span) in rec.raw_label_spans.iter().enumerate() {
        if span.start >= span.end || span.end > rec.samples.len() {
            out.push(Violation::new("raw_label_spans", Some(i), ViolationKind::SpanOutOfBounds));
        }
        if span.label.is_empty() {
            out.push(Violation::new("raw_label_spans", Some(i), ViolationKind::EmptyLabel));
        }
    }
    out
}

/// Fresh sortable identifier for a recording, job, mapping or model.
pub fn new_id() -> String {
    ulid::Ulid::new().to_string()
}
