//! Queries over the catalog, sliding-window framing and exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CanonicalRecording, LabelDictionary, SensorKind, Window};
use crate::store::{io_err, CatalogEntry, StoreError, UnifiedStore, CATALOG_FILE, SEGMENT_EXT};

#[derive(Debug, Error)]
pub enum ComposerError {
    #[error("query filter sets no field; pass select_all to match everything")]
    Unconstrained,
    #[error("{0:?} is not in the label dictionary")]
    UnknownLabel(String),
    #[error("invalid windowing: {0}")]
    InvalidWindowing(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryFilter {
    pub labels: Option<BTreeSet<String>>,
    pub dataset_ids: Option<BTreeSet<String>>,
    pub subject_ids: Option<BTreeSet<String>>,
    pub sensor_kind: Option<SensorKind>,
    pub min_duration_s: Option<f64>,
    pub include_unlabeled: bool,
    pub select_all: bool,
}

impl QueryFilter {
    pub fn all() -> Self {
        Self {
            select_all: true,
            ..Self::default()
        }
    }

    pub fn label(label: &str) -> Self {
        Self {
            labels: Some(BTreeSet::from([label.to_string()])),
            ..Self::default()
        }
    }

    fn is_constrained(&self) -> bool {
        self.select_all
            || self.include_unlabeled
            || self.labels.is_some()
            || self.dataset_ids.is_some()
            || self.subject_ids.is_some()
            || self.sensor_kind.is_some()
            || self.min_duration_s.is_some()
    }
}

/// Entries matching every set field of `filter`, ordered by recording id.
///
/// Label names may be given as canonical names or aliases; anything else is
/// an error. Unlabeled recordings match only with `include_unlabeled` and
/// only when no label set is requested.
pub fn query(
    entries: &[CatalogEntry],
    filter: &QueryFilter,
    dictionary: &LabelDictionary,
) -> Result<Vec<CatalogEntry>, ComposerError> {
    if !filter.is_constrained() {
        return Err(ComposerError::Unconstrained);
    }
    let labels = match &filter.labels {
        None => None,
        Some(set) => Some(
            set.iter()
                .map(|l| {
                    dictionary
                        .resolve(l)
                        .map(str::to_string)
                        .ok_or_else(|| ComposerError::UnknownLabel(l.clone()))
                })
                .collect::<Result<BTreeSet<_>, _>>()?,
        ),
    };
    let mut out: Vec<CatalogEntry> = entries
        .iter()
        .filter(|e| filter.include_unlabeled || !e.label_spans.is_empty())
        .filter(|e| labels.as_ref().is_none_or(|ls| ls.iter().any(|l| e.has_label(l))))
        .filter(|e| filter.dataset_ids.as_ref().is_none_or(|s| s.contains(&e.dataset_id)))
        .filter(|e| filter.subject_ids.as_ref().is_none_or(|s| s.contains(&e.subject_id)))
        .filter(|e| filter.sensor_kind.is_none_or(|k| e.sensor_kind == k))
        .filter(|e| filter.min_duration_s.is_none_or(|d| e.duration_s() >= d))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowingSpec {
    pub window_s: f64,
    pub overlap_fraction: f64,
    /// A label must cover more than this fraction of a window's samples.
    pub majority_threshold: f64,
}

impl Default for WindowingSpec {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            overlap_fraction: 0.5,
            majority_threshold: 0.5,
        }
    }
}

impl WindowingSpec {
    pub fn validate(&self, rate_hz: f64) -> Result<(), ComposerError> {
        let bad = |m: String| Err(ComposerError::InvalidWindowing(m));
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return bad(format!("window_s must be positive, got {}", self.window_s));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction must be in [0, 1), got {}", self.overlap_fraction));
        }
        if !(0.5..=1.0).contains(&self.majority_threshold) {
            return bad(format!("majority_threshold must be in [0.5, 1], got {}", self.majority_threshold));
        }
        if self.window_samples(rate_hz) < 2 {
            return bad(format!("window of {} s is shorter than 2 samples", self.window_s));
        }
        Ok(())
    }

    pub fn window_samples(&self, rate_hz: f64) -> usize {
        (self.window_s * rate_hz).round() as usize
    }

    pub fn stride(&self, rate_hz: f64) -> usize {
        ((self.window_samples(rate_hz) as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }

    /// Start indices of every complete window over `n_samples` samples.
    pub fn starts(&self, n_samples: usize, rate_hz: f64) -> impl Iterator<Item = usize> {
        let len = self.window_samples(rate_hz);
        let stride = self.stride(rate_hz);
        let count = if n_samples < len { 0 } else { (n_samples - len) / stride + 1 };
        (0..count).map(move |i| i * stride)
    }

    fn qualifies(&self, covered: usize, len: usize) -> bool {
        covered == len || covered as f64 > self.majority_threshold * len as f64
    }
}

/// Label carried by a strict majority of `[start, start + len)`, if any.
pub fn majority_label<'a>(rec: &'a CanonicalRecording, start: usize, len: usize, spec: &WindowingSpec) -> Option<&'a str> {
    let mut cover: BTreeMap<&str, usize> = BTreeMap::new();
    for span in &rec.label_spans {
        let n = span.overlap(start, start + len);
        if n > 0 {
            *cover.entry(span.label.as_str()).or_default() += n;
        }
    }
    cover
        .into_iter()
        .find(|(_, n)| spec.qualifies(*n, len))
        .map(|(label, _)| label)
}

/// Cuts a labeled recording into windows. Windows without a qualifying
/// majority label are discarded.
pub fn windows(rec: &CanonicalRecording, spec: &WindowingSpec) -> Result<Vec<Window>, ComposerError> {
    spec.validate(rec.rate_hz)?;
    let len = spec.window_samples(rec.rate_hz);
    let mut out = Vec::new();
    let mut discarded = 0;
    for start in spec.starts(rec.samples.len(), rec.rate_hz) {
        match majority_label(rec, start, len, spec) {
            Some(label) => out.push(Window {
                recording_id: rec.recording_id.clone(),
                start_index: start,
                label: label.to_string(),
                data: rec.samples[start..start + len].to_vec(),
            }),
            None => discarded += 1,
        }
    }
    if discarded > 0 {
        log::debug!("{}: {discarded} windows without a majority label", rec.recording_id);
    }
    Ok(out)
}

/// Windows of the recording stored under `recording_id`.
pub fn windows_for(store: &UnifiedStore, recording_id: &str, spec: &WindowingSpec) -> Result<Vec<Window>, ComposerError> {
    windows(&store.read_recording(recording_id)?, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Uds,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "uds" => Ok(ExportFormat::Uds),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

/// Writes `t,x,y,z,label` rows. Samples outside every span get an empty label.
pub fn write_csv(rec: &CanonicalRecording, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "t,x,y,z,label")?;
    let mut spans = rec.label_spans.iter().peekable();
    for (k, s) in rec.samples.iter().enumerate() {
        while spans.peek().is_some_and(|sp| sp.end <= k) {
            spans.next();
        }
        let label = spans.peek().filter(|sp| sp.start <= k).map_or("", |sp| sp.label.as_str());
        writeln!(out, "{:.6},{},{},{},{}", k as f64 / rec.rate_hz, s[0], s[1], s[2], label)?;
    }
    Ok(())
}

/// Writes the given entries into `dest`: one `<id>.csv` per recording, or
/// verbatim `<id>.uds` segment copies plus a `catalog.jsonl` excerpt.
/// Returns the written paths in order.
pub fn export(
    store: &UnifiedStore,
    entries: &[CatalogEntry],
    format: ExportFormat,
    dest: &Path,
) -> Result<Vec<PathBuf>, ComposerError> {
    fs::create_dir_all(dest).map_err(io_err(dest))?;
    let mut written = Vec::new();
    match format {
        ExportFormat::Csv => {
            for e in entries {
                let rec = store.read_recording(&e.recording_id)?;
                let path = dest.join(format!("{}.csv", e.recording_id));
                let mut buf = Vec::new();
                write_csv(&rec, &mut buf).expect("writing to memory");
                fs::write(&path, buf).map_err(io_err(&path))?;
                written.push(path);
            }
        }
        ExportFormat::Uds => {
            let mut catalog = String::new();
            for e in entries {
                let (entry, bytes) = store.segment_bytes(&e.recording_id)?;
                let path = dest.join(format!("{}.{SEGMENT_EXT}", e.recording_id));
                fs::write(&path, bytes).map_err(io_err(&path))?;
                written.push(path);
                catalog.push_str(&serde_json::to_string(&entry).expect("catalog entry serializes"));
                catalog.push('\n');
            }
            let path = dest.join(CATALOG_FILE);
            fs::write(&path, catalog).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelSpan, CANONICAL_RATE_HZ};

    fn rec(n: usize, spans: Vec<LabelSpan>) -> CanonicalRecording {
        CanonicalRecording {
            recording_id: "r".into(),
            dataset_id: "d".into(),
            subject_id: "s".into(),
            sensor_kind: SensorKind::Accelerometer,
            rate_hz: CANONICAL_RATE_HZ,
            includes_gravity: true,
            samples: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            label_spans: spans,
        }
    }

    fn spec(window_samples: usize, overlap: f64) -> WindowingSpec {
        WindowingSpec {
            window_s: window_samples as f64 / CANONICAL_RATE_HZ,
            overlap_fraction: overlap,
            majority_threshold: 0.5,
        }
    }

    #[test]
    fn window_counts() {
        let r = rec(1000, vec![LabelSpan::new(0, 1000, "walking")]);
        let w = windows(&r, &spec(100, 0.5)).unwrap();
        assert_eq!(w.len(), (1000 - 100) / 50 + 1);
        assert!(w.iter().enumerate().all(|(i, w)| w.start_index == i * 50 && w.len() == 100));

        assert!(windows(&rec(50, vec![LabelSpan::new(0, 50, "walking")]), &spec(100, 0.5)).unwrap().is_empty());
        assert_eq!(windows(&rec(100, vec![LabelSpan::new(0, 100, "walking")]), &spec(100, 0.0)).unwrap().len(), 1);
    }

    #[test]
    fn tie_is_discarded() {
        let r = rec(100, vec![LabelSpan::new(0, 50, "walking"), LabelSpan::new(50, 100, "running")]);
        assert!(windows(&r, &spec(100, 0.0)).unwrap().is_empty());
        let r = rec(100, vec![LabelSpan::new(0, 51, "walking"), LabelSpan::new(51, 100, "running")]);
        assert_eq!(windows(&r, &spec(100, 0.0)).unwrap()[0].label, "walking");
        let r = rec(100, vec![LabelSpan::new(0, 40, "walking")]);
        assert!(windows(&r, &spec(100, 0.0)).unwrap().is_empty());
    }

    #[test]
    fn windowing_validation() {
        let r = rec(10, vec![]);
        let mut s = WindowingSpec {
            overlap_fraction: 1.0,
            ..WindowingSpec::default()
        };
        assert!(matches!(windows(&r, &s), Err(ComposerError::InvalidWindowing(_))));
        s = spec(1, 0.0);
        assert!(matches!(windows(&r, &s), Err(ComposerError::InvalidWindowing(_))));
        assert_eq!(WindowingSpec::default().window_samples(50.0), 100);
        assert_eq!(WindowingSpec::default().stride(50.0), 50);
    }

    #[test]
    fn csv_two_samples() {
        let mut r = rec(2, vec![LabelSpan::new(0, 2, "walking")]);
        r.samples = vec![[0.1, -2.0, 9.80665], [1e-300, 0.0, 3.5]];
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "t,x,y,z,label");
        assert_eq!(lines[1], "0.000000,0.1,-2,9.80665,walking");
        assert!(lines[2].starts_with("0.020000,"));
        assert!(lines[2].ends_with(",walking"));
        let x: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x, 1e-300);
    }

    #[test]
    fn csv_unlabeled_gap() {
        let r = rec(3, vec![LabelSpan::new(1, 2, "walking")]);
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let labels: Vec<_> = String::from_utf8(buf).unwrap().lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect();
        assert_eq!(labels, vec!["", "walking", ""]);
    }
}
