//! Declarative drivers: manifest parsing, file discovery and file parsing.

mod layout;
mod manifest;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use layout::LayoutPattern;
pub use manifest::{parse_manifest, DriverManifest, LabelSource, ManifestError, RateSource, SidecarSpec};
pub use table::{parse_table, ColumnRole, DecimalSeparator, FieldLayout, FileSyntax, Row, TableError};

use crate::model::{LabelSpan, RawRecording, SampleTiming};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("labels for {path}: {reason}")]
    Label { path: PathBuf, reason: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// A file matched by a manifest layout, with its captured path values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingSource {
    pub file_path: PathBuf,
    /// Path relative to the dataset root, `/`-separated.
    pub relative_path: String,
    pub captured: BTreeMap<String, String>,
}

/// Lists every regular file under `root` matching the manifest layout,
/// sorted by relative path.
pub fn discover(root: &Path, manifest: &DriverManifest) -> Result<Vec<RecordingSource>, DriverError> {
    let io_err = |source| DriverError::Io {
        path: root.to_path_buf(),
        source,
    };
    if !fs::metadata(root).map_err(io_err)?.is_dir() {
        return Err(DriverError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "dataset root is not a directory"),
        });
    }
    let depth = manifest.layout.depth();
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).min_depth(depth).max_depth(depth) {
        let entry = entry.map_err(|e| DriverError::Io {
            path: e.path().unwrap_or(root).to_path_buf(),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("directory walk failed")),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else { continue };
        let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
        let Some(parts) = parts else { continue };
        if let Some(captured) = manifest.layout.match_components(&parts) {
            out.push(RecordingSource {
                file_path: entry.path().to_path_buf(),
                relative_path: parts.join("/"),
                captured,
            });
        }
    }
    out.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
    Ok(out)
}

fn read_text(path: &Path) -> Result<String, DriverError> {
    let bytes = fs::read(path).map_err(|source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| DriverError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("file is not UTF-8 (byte {})", e.utf8_error().valid_up_to()),
    })
}

/// Collapses per-row labels into spans: a new span opens wherever the label
/// differs from the previous row's.
pub fn coalesce_row_labels<S: AsRef<str>>(labels: &[S]) -> Vec<LabelSpan> {
    let mut spans: Vec<LabelSpan> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let label = label.as_ref();
        match spans.last_mut() {
            Some(last) if last.label == label => last.end = i + 1,
            _ => spans.push(LabelSpan::new(i, i + 1, label)),
        }
    }
    spans
}

/// Parses the contents of a sidecar label file into spans over `n_rows` rows.
pub fn parse_sidecar(text: &str, spec: &SidecarSpec, n_rows: usize) -> Result<Vec<LabelSpan>, String> {
    let mut spans = Vec::new();
    for (line, content) in table::data_lines(text, spec.header_rows) {
        let fields = table::split_fields(content, &spec.fields);
        if fields.len() != spec.n_columns {
            return Err(format!("line {line}: expected {} fields, found {}", spec.n_columns, fields.len()));
        }
        let index = |col: usize| -> Result<usize, String> {
            fields[col]
                .parse::<usize>()
                .map_err(|_| format!("line {line}: invalid row index {:?}", fields[col]))
        };
        let (start, end) = (index(spec.start_column)?, index(spec.end_column)?);
        let label = fields[spec.label_column].clone();
        if label.is_empty() {
            return Err(format!("line {line}: empty label"));
        }
        if start >= end || end > n_rows {
            return Err(format!("line {line}: span {start}..{end} outside 0..{n_rows}"));
        }
        spans.push(LabelSpan::new(start, end, label));
    }
    spans.sort();
    if spans.windows(2).any(|w| w[1].start < w[0].end) {
        return Err("overlapping label spans".into());
    }
    Ok(spans)
}

/// Reads one matched file into a [`RawRecording`] with labels attached
/// according to the manifest's label source.
pub fn parse_recording(
    src: &RecordingSource,
    manifest: &DriverManifest,
    dataset_id: &str,
) -> Result<RawRecording, DriverError> {
    let path = &src.file_path;
    let text = read_text(path)?;
    let rows = parse_table(&text, &manifest.file_syntax).map_err(|e| DriverError::Parse {
        path: path.clone(),
        line: e.line,
        reason: e.reason,
    })?;
    if rows.is_empty() {
        return Err(DriverError::Parse {
            path: path.clone(),
            line: 0,
            reason: "file has no data rows".into(),
        });
    }

    let timing = match manifest.rate {
        RateSource::Fixed(hz) => SampleTiming::Rate(hz),
        RateSource::FromTimestampColumn => {
            let mut ts = Vec::with_capacity(rows.len());
            for row in &rows {
                let t = row.timestamp.expect("manifest guarantees a timestamp column") * manifest.timestamp_scale;
                if let Some(prev) = ts.last() {
                    if t.partial_cmp(prev) != Some(std::cmp::Ordering::Greater) {
                        return Err(DriverError::Parse {
                            path: path.clone(),
                            line: row.line,
                            reason: "timestamps are not strictly increasing".into(),
                        });
                    }
                }
                ts.push(t);
            }
            SampleTiming::Timestamps(ts)
        }
    };

    let raw_label_spans = match &manifest.label_source {
        LabelSource::Unlabeled => Vec::new(),
        LabelSource::PathCapture(group) => {
            let label = src.captured.get(group).cloned().unwrap_or_default();
            if label.is_empty() {
                return Err(DriverError::Label {
                    path: path.clone(),
                    reason: format!("capture {{{group}}} is empty"),
                });
            }
            vec![LabelSpan::new(0, rows.len(), label)]
        }
        LabelSource::PerRowColumn => {
            let mut labels = Vec::with_capacity(rows.len());
            for row in &rows {
                match row.label.as_deref() {
                    Some(l) if !l.is_empty() => labels.push(l),
                    _ => {
                        return Err(DriverError::Label {
                            path: path.clone(),
                            reason: format!("empty label on line {}", row.line),
                        })
                    }
                }
            }
            coalesce_row_labels(&labels)
        }
        LabelSource::SidecarFile(spec) => {
            let rel = spec.path.render(&src.captured).map_err(|reason| DriverError::Label {
                path: path.clone(),
                reason,
            })?;
            let sidecar = path.parent().unwrap_or(Path::new(".")).join(rel);
            if !sidecar.is_file() {
                return Err(DriverError::Label {
                    path: path.clone(),
                    reason: format!("sidecar {} not found", sidecar.display()),
                });
            }
            let text = read_text(&sidecar)?;
            parse_sidecar(&text, spec, rows.len()).map_err(|reason| DriverError::Label {
                path: sidecar.clone(),
                reason,
            })?
        }
    };

    let subject_id = src
        .captured
        .get("subject")
        .cloned()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();

    Ok(RawRecording {
        dataset_id: dataset_id.to_string(),
        source_path: src.relative_path.clone(),
        subject_id,
        sensor_kind: manifest.sensor_kind,
        declared_unit: manifest.unit,
        timing,
        includes_gravity: manifest.includes_gravity,
        samples: rows.iter().map(|r| r.values).collect(),
        raw_label_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn span_count_equals_label_runs(labels in proptest::collection::vec(prop_oneof!["a", "b", "c"], 1..60)) {
            let spans = coalesce_row_labels(&labels);
            let boundaries = labels.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(spans.len(), boundaries + 1);
            prop_assert_eq!(spans.first().unwrap().start, 0);
            prop_assert_eq!(spans.last().unwrap().end, labels.len());
            for w in spans.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert_ne!(&w[0].label, &w[1].label);
            }
        }
    }
}
