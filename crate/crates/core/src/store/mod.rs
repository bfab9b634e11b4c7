//! The unified store: one checksummed segment file per recording plus an
//! append-only JSON-Lines catalog.
//!
//! Layout under the store root:
//!
//! ```text
//! catalog.jsonl          one CatalogEntry per line
//! segments/<id>.uds      segment files
//! staging/<dataset>/     recordings waiting for label finalization
//! ```
//!
//! Segments are written to a temporary name, synced and renamed before their
//! catalog line is appended, so the catalog never names a missing segment. A
//! segment without a catalog line is garbage from an interrupted append and
//! is removed on open.

mod job;
pub mod segment;
mod staging;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::sync::{Mutex, RwLock};
use thiserror::Error;

pub use job::{FileError, ImportJob, JobCounts, JobState};
pub use segment::SegmentError;
pub use staging::{StagedMeta, Staging};

use crate::model::{CanonicalRecording, LabelSpan, SensorKind, Violation};

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const SEGMENT_DIR: &str = "segments";
pub const SEGMENT_EXT: &str = "uds";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("recording {0} already exists")]
    DuplicateId(String),
    #[error("recording {0} not found")]
    NotFound(String),
    #[error("segment for {id} is corrupt: {source}")]
    CorruptSegment {
        id: String,
        #[source]
        source: SegmentError,
    },
    #[error("catalog line {line} is malformed: {message}")]
    CorruptCatalog { line: usize, message: String },
    #[error("recording violates canonical invariants: {0:?}")]
    InvalidRecording(Vec<Violation>),
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Identifiers become file and directory names; keep them boring.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Searchable metadata of one stored recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub recording_id: String,
    pub dataset_id: String,
    pub subject_id: String,
    pub sensor_kind: SensorKind,
    pub rate_hz: f64,
    pub includes_gravity: bool,
    pub n_samples: usize,
    pub label_spans: Vec<LabelSpan>,
    /// Relative to the store root.
    pub segment_path: String,
    pub crc32: u32,
    pub created_at: DateTime<Utc>,
}

impl CatalogEntry {
    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.rate_hz
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_spans.iter().any(|s| s.label == label)
    }
}

#[derive(Debug, Default)]
struct Catalog {
    entries: Vec<CatalogEntry>,
    index: HashMap<String, usize>,
}

impl Catalog {
    fn push(&mut self, entry: CatalogEntry) {
        self.index.insert(entry.recording_id.clone(), self.entries.len());
        self.entries.push(entry);
    }
}

/// Writes `bytes` to `path` via a synced temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent() {
        // directory fsync is best effort; not every platform allows it
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub struct UnifiedStore {
    root: PathBuf,
    catalog: RwLock<Catalog>,
    writer: Mutex<()>,
}

impl UnifiedStore {
    /// Opens (creating if needed) a store rooted at `root`, replaying the
    /// catalog and discarding debris from interrupted appends.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let seg_dir = root.join(SEGMENT_DIR);
        fs::create_dir_all(&seg_dir).map_err(io_err(&seg_dir))?;
        let catalog_path = root.join(CATALOG_FILE);
        let mut catalog = Catalog::default();
        if catalog_path.exists() {
            let text = fs::read_to_string(&catalog_path).map_err(io_err(&catalog_path))?;
            let mut good_len = 0;
            for (i, line) in text.split_inclusive('\n').enumerate() {
                let complete = line.ends_with('\n');
                match serde_json::from_str::<CatalogEntry>(line.trim_end()) {
                    Ok(entry) if complete => {
                        catalog.push(entry);
                        good_len += line.len();
                    }
                    // a torn final line is an append that never finished
                    _ if !complete => break,
                    Ok(_) => unreachable!(),
                    Err(e) => {
                        return Err(StoreError::CorruptCatalog {
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            if good_len < text.len() {
                log::warn!("truncating torn catalog tail at byte {good_len}");
                let f = OpenOptions::new().write(true).open(&catalog_path).map_err(io_err(&catalog_path))?;
                f.set_len(good_len as u64).map_err(io_err(&catalog_path))?;
                f.sync_all().map_err(io_err(&catalog_path))?;
            }
        }
        for entry in fs::read_dir(&seg_dir).map_err(io_err(&seg_dir))? {
            let path = entry.map_err(io_err(&seg_dir))?.path();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let is_segment = path.extension().and_then(|e| e.to_str()) == Some(SEGMENT_EXT);
            if !is_segment || !catalog.index.contains_key(stem) {
                log::warn!("removing orphan {}", path.display());
                fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
        Ok(Self {
            root,
            catalog: RwLock::new(catalog),
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn staging(&self) -> Staging {
        Staging::new(self.root.join("staging"))
    }

    pub fn len(&self) -> usize {
        self.catalog.read().expect("catalog lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all entries in append order.
    pub fn entries(&self) -> Vec<CatalogEntry> {
        self.catalog.read().expect("catalog lock").entries.clone()
    }

    pub fn entry(&self, recording_id: &str) -> Option<CatalogEntry> {
        let cat = self.catalog.read().expect("catalog lock");
        cat.index.get(recording_id).map(|i| cat.entries[*i].clone())
    }

    pub fn contains(&self, recording_id: &str) -> bool {
        self.catalog.read().expect("catalog lock").index.contains_key(recording_id)
    }

    /// Persists a finalized recording. The segment and its catalog line are
    /// both durable when this returns.
    pub fn append_recording(&self, rec: &CanonicalRecording) -> Result<CatalogEntry, StoreError> {
        if !is_safe_id(&rec.recording_id) {
            return Err(StoreError::InvalidId(rec.recording_id.clone()));
        }
        let violations = rec.check(None);
        if !violations.is_empty() {
            return Err(StoreError::InvalidRecording(violations));
        }
        let _guard = self.writer.lock().expect("writer lock");
        if self.contains(&rec.recording_id) {
            return Err(StoreError::DuplicateId(rec.recording_id.clone()));
        }
        let bytes = segment::encode(rec.rate_hz, rec.includes_gravity, &rec.samples)
            .map_err(|source| StoreError::CorruptSegment {
                id: rec.recording_id.clone(),
                source,
            })?;
        let rel = format!("{SEGMENT_DIR}/{}.{SEGMENT_EXT}", rec.recording_id);
        let seg_path = self.root.join(&rel);
        write_atomic(&seg_path, &bytes)?;
        let entry = CatalogEntry {
            recording_id: rec.recording_id.clone(),
            dataset_id: rec.dataset_id.clone(),
            subject_id: rec.subject_id.clone(),
            sensor_kind: rec.sensor_kind,
            rate_hz: rec.rate_hz,
            includes_gravity: rec.includes_gravity,
            n_samples: rec.samples.len(),
            label_spans: rec.label_spans.clone(),
            segment_path: rel,
            crc32: segment::stored_crc(&bytes).expect("encoded segment has a trailer"),
            created_at: Utc::now(),
        };
        let mut line = serde_json::to_string(&entry).expect("catalog entry serializes");
        line.push('\n');
        let catalog_path = self.root.join(CATALOG_FILE);
        let append = || -> io::Result<()> {
            let mut f = OpenOptions::new().create(true).append(true).open(&catalog_path)?;
            f.write_all(line.as_bytes())?;
            f.sync_all()
        };
        if let Err(e) = append() {
            let _ = fs::remove_file(&seg_path);
            return Err(StoreError::Io {
                path: catalog_path,
                source: e,
            });
        }
        self.catalog.write().expect("catalog lock").push(entry.clone());
        Ok(entry)
    }

    /// Verified raw bytes of a recording's segment.
    pub fn segment_bytes(&self, recording_id: &str) -> Result<(CatalogEntry, Vec<u8>), StoreError> {
        let entry = self
            .entry(recording_id)
            .ok_or_else(|| StoreError::NotFound(recording_id.to_string()))?;
        let path = self.root.join(&entry.segment_path);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let corrupt = |source| StoreError::CorruptSegment {
            id: recording_id.to_string(),
            source,
        };
        let data = segment::decode(&bytes).map_err(corrupt)?;
        let stored = segment::stored_crc(&bytes).unwrap_or_default();
        if stored != entry.crc32 {
            return Err(corrupt(SegmentError::CrcMismatch {
                stored: entry.crc32,
                computed: stored,
            }));
        }
        if data.samples.len() != entry.n_samples {
            return Err(corrupt(SegmentError::LengthMismatch {
                declared: entry.n_samples as u32,
                actual: data.samples.len() * 24,
            }));
        }
        Ok((entry, bytes))
    }

    pub fn read_recording(&self, recording_id: &str) -> Result<CanonicalRecording, StoreError> {
        let (entry, bytes) = self.segment_bytes(recording_id)?;
        let data = segment::decode(&bytes).map_err(|source| StoreError::CorruptSegment {
            id: recording_id.to_string(),
            source,
        })?;
        Ok(CanonicalRecording {
            recording_id: entry.recording_id,
            dataset_id: entry.dataset_id,
            subject_id: entry.subject_id,
            sensor_kind: entry.sensor_kind,
            rate_hz: data.rate_hz,
            includes_gravity: data.includes_gravity,
            samples: data.samples,
            label_spans: entry.label_spans,
        })
    }

    /// Appends every recording of a `uds` export directory (a catalog excerpt
    /// plus segment copies) to this store.
    pub fn ingest_export(&self, dir: &Path) -> Result<Vec<CatalogEntry>, StoreError> {
        let catalog_path = dir.join(CATALOG_FILE);
        let text = fs::read_to_string(&catalog_path).map_err(io_err(&catalog_path))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: CatalogEntry = serde_json::from_str(line).map_err(|e| StoreError::CorruptCatalog {
                line: i + 1,
                message: e.to_string(),
            })?;
            let file_name = Path::new(&entry.segment_path)
                .file_name()
                .ok_or_else(|| StoreError::InvalidId(entry.segment_path.clone()))?;
            let path = dir.join(file_name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let data = segment::decode(&bytes).map_err(|source| StoreError::CorruptSegment {
                id: entry.recording_id.clone(),
                source,
            })?;
            let rec = CanonicalRecording {
                recording_id: entry.recording_id,
                dataset_id: entry.dataset_id,
                subject_id: entry.subject_id,
                sensor_kind: entry.sensor_kind,
                rate_hz: data.rate_hz,
                includes_gravity: data.includes_gravity,
                samples: data.samples,
                label_spans: entry.label_spans,
            };
            out.push(self.append_recording(&rec)?);
        }
        Ok(out)
    }
}
