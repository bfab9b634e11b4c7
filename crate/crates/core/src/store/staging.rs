//! Aligned recordings that still carry raw labels, grouped by dataset.
//!
//! `staging/<dataset>/<recording_id>.uds` holds the samples in segment form,
//! `staging/<dataset>/<recording_id>.json` the remaining metadata. Nothing
//! here is visible through the catalog.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, is_safe_id, segment, write_atomic, StoreError, SEGMENT_EXT};
use crate::model::{CanonicalRecording, LabelSpan, SensorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedMeta {
    pub recording_id: String,
    pub dataset_id: String,
    pub subject_id: String,
    pub sensor_kind: SensorKind,
    pub source_path: String,
    /// Spans over the canonical grid, still carrying raw labels.
    pub raw_label_spans: Vec<LabelSpan>,
}

pub struct Staging {
    root: PathBuf,
}

impl Staging {
    pub(crate) fn new(root: PathBuf) -> Self {
        Self { root }
    }

    fn dataset_dir(&self, dataset_id: &str) -> Result<PathBuf, StoreError> {
        if !is_safe_id(dataset_id) {
            return Err(StoreError::InvalidId(dataset_id.to_string()));
        }
        Ok(self.root.join(dataset_id))
    }

    pub fn stage(&self, rec: &CanonicalRecording, source_path: &str) -> Result<(), StoreError> {
        if !is_safe_id(&rec.recording_id) {
            return Err(StoreError::InvalidId(rec.recording_id.clone()));
        }
        let dir = self.dataset_dir(&rec.dataset_id)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let bytes = segment::encode(rec.rate_hz, rec.includes_gravity, &rec.samples).map_err(|source| {
            StoreError::CorruptSegment {
                id: rec.recording_id.clone(),
                source,
            }
        })?;
        write_atomic(&dir.join(format!("{}.{SEGMENT_EXT}", rec.recording_id)), &bytes)?;
        let meta = StagedMeta {
            recording_id: rec.recording_id.clone(),
            dataset_id: rec.dataset_id.clone(),
            subject_id: rec.subject_id.clone(),
            sensor_kind: rec.sensor_kind,
            source_path: source_path.to_string(),
            raw_label_spans: rec.label_spans.clone(),
        };
        let json = serde_json::to_vec_pretty(&meta).expect("staged meta serializes");
        write_atomic(&dir.join(format!("{}.json", rec.recording_id)), &json)
    }

    /// Staged recordings of a dataset, ordered by recording id. Spans carry
    /// raw labels.
    pub fn load(&self, dataset_id: &str) -> Result<Vec<(StagedMeta, CanonicalRecording)>, StoreError> {
        let dir = self.dataset_dir(dataset_id)?;
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut metas = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                metas.push(path);
            }
        }
        metas.sort();
        let mut out = Vec::with_capacity(metas.len());
        for meta_path in metas {
            out.push(self.load_one(&meta_path)?);
        }
        Ok(out)
    }

    fn load_one(&self, meta_path: &Path) -> Result<(StagedMeta, CanonicalRecording), StoreError> {
        let text = fs::read(meta_path).map_err(io_err(meta_path))?;
        let meta: StagedMeta = serde_json::from_slice(&text).map_err(|e| StoreError::CorruptCatalog {
            line: e.line(),
            message: format!("{}: {e}", meta_path.display()),
        })?;
        let seg_path = meta_path.with_extension(SEGMENT_EXT);
        let bytes = fs::read(&seg_path).map_err(io_err(&seg_path))?;
        let data = segment::decode(&bytes).map_err(|source| StoreError::CorruptSegment {
            id: meta.recording_id.clone(),
            source,
        })?;
        let rec = CanonicalRecording {
            recording_id: meta.recording_id.clone(),
            dataset_id: meta.dataset_id.clone(),
            subject_id: meta.subject_id.clone(),
            sensor_kind: meta.sensor_kind,
            rate_hz: data.rate_hz,
            includes_gravity: data.includes_gravity,
            samples: data.samples,
            label_spans: meta.raw_label_spans.clone(),
        };
        Ok((meta, rec))
    }

    /// Removes one staged recording once it has been committed.
    pub fn remove(&self, dataset_id: &str, recording_id: &str) -> Result<(), StoreError> {
        let dir = self.dataset_dir(dataset_id)?;
        for ext in [SEGMENT_EXT, "json"] {
            let path = dir.join(format!("{recording_id}.{ext}"));
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(StoreError::Io { path, source: e }),
            }
        }
        Ok(())
    }

    /// Drops a dataset's staging directory entirely.
    pub fn clear(&self, dataset_id: &str) -> Result<(), StoreError> {
        let dir = self.dataset_dir(dataset_id)?;
        match fs::remove_dir_all(&dir) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(StoreError::Io { path: dir, source: e }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CANONICAL_RATE_HZ;

    #[test]
    fn stage_load_remove() {
        let dir = tempfile::tempdir().unwrap();
        let staging = Staging::new(dir.path().join("staging"));
        let rec = CanonicalRecording {
            recording_id: "01ABC".into(),
            dataset_id: "uci".into(),
            subject_id: "3".into(),
            sensor_kind: SensorKind::Accelerometer,
            rate_hz: CANONICAL_RATE_HZ,
            includes_gravity: false,
            samples: vec![[1.0, 2.0, 3.0]; 4],
            label_spans: vec![LabelSpan::new(0, 4, "WALK")],
        };
        staging.stage(&rec, "train/acc_3_WALK.txt").unwrap();
        let loaded = staging.load("uci").unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].1, rec);
        assert_eq!(loaded[0].0.source_path, "train/acc_3_WALK.txt");
        staging.remove("uci", "01ABC").unwrap();
        assert!(staging.load("uci").unwrap().is_empty());
        assert!(staging.load("never").unwrap().is_empty());
        assert!(matches!(staging.load("../x"), Err(StoreError::InvalidId(_))));
    }
}
