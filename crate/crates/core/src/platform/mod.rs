//! The platform facade: one store directory holding drivers, the label
//! dictionary, mapping decisions, import jobs and trained models next to the
//! unified store.
//!
//! ```text
//! <root>/LOCK                  held exclusively while a Platform is open
//! <root>/dictionary.toml
//! <root>/mappings.json
//! <root>/drivers/<id>.toml
//! <root>/jobs/<id>.json
//! <root>/models/<id>.json      registered model files
//! <root>/training/<id>.json    training job records
//! <root>/catalog.jsonl, segments/, staging/   the unified store
//! ```

mod import;
mod training;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use import::ApplyOutcome;
pub use training::{ModelSummary, TrainRequest, TrainState, TrainingFrames, TrainingJob};

use crate::classifier::ClassifierError;
use crate::composer::{self, ComposerError, ExportFormat, QueryFilter};
use crate::driver::{parse_manifest, DriverManifest, ManifestError};
use crate::labels::{Decision, LabelError, LabelMapping, MappingBook};
use crate::model::{DictionaryError, LabelDictionary, LabelEntry};
use crate::store::{io_err, is_safe_id, write_atomic, CatalogEntry, ImportJob, StoreError, UnifiedStore};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("store {0} is in use by another process")]
    StoreLocked(PathBuf),
    #[error("driver {0:?} is not registered")]
    DriverNotFound(String),
    #[error("driver {0:?} is already registered")]
    DriverExists(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error("label {0:?} already exists")]
    LabelExists(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Composer(#[from] ComposerError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("import job {0:?} not found")]
    JobNotFound(String),
    #[error("model {0:?} not found")]
    UnknownModel(String),
    #[error("model {0:?} is still training")]
    ModelNotReady(String),
    #[error("training of model {model_id:?} failed: {reason}")]
    ModelFailed { model_id: String, reason: String },
    #[error("dataset {0:?} was already imported")]
    DatasetExists(String),
    #[error("dataset {0:?} is being finalized by another request")]
    DatasetBusy(String),
    #[error("dataset {0:?} has no import awaiting labels")]
    NothingStaged(String),
    #[error("no training frames match the request")]
    NoTrainingFrames,
    #[error("{0}")]
    InvalidRequest(String),
}

pub type Result<T> = std::result::Result<T, PlatformError>;

fn invalid(msg: impl Into<String>) -> PlatformError {
    PlatformError::InvalidRequest(msg.into())
}

#[derive(Debug, Clone, Default)]
pub struct PlatformConfig {
    pub root: PathBuf,
    /// Dictionary used to seed a store that has none yet.
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriverInfo {
    pub driver_id: String,
    pub layout: String,
    pub unit: String,
    pub includes_gravity: bool,
    pub manifest: String,
}

struct Driver {
    manifest: DriverManifest,
    text: String,
}

pub struct Platform {
    root: PathBuf,
    store: UnifiedStore,
    _lock: File,
    dictionary: RwLock<LabelDictionary>,
    drivers: RwLock<BTreeMap<String, Arc<Driver>>>,
    mappings: Mutex<MappingBook>,
    jobs: RwLock<BTreeMap<String, ImportJob>>,
    finalizing: Mutex<HashSet<String>>,
    models: RwLock<BTreeMap<String, Arc<crate::classifier::TrainedModel>>>,
    training: RwLock<BTreeMap<String, TrainingJob>>,
}

fn read_dir_sorted(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        PlatformError::Store(StoreError::CorruptCatalog {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    })
}

impl Platform {
    pub fn open(config: PlatformConfig) -> Result<Self> {
        let root = config.root;
        for sub in ["drivers", "jobs", "models", "training"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let lock_path = root.join("LOCK");
        let lock = File::create(&lock_path).map_err(io_err(&lock_path))?;
        if lock.try_lock().is_err() {
            return Err(PlatformError::StoreLocked(root));
        }
        let store = UnifiedStore::open(&root)?;

        let dict_path = root.join("dictionary.toml");
        let dictionary = if dict_path.exists() {
            LabelDictionary::from_toml(&fs::read_to_string(&dict_path).map_err(io_err(&dict_path))?)?
        } else {
            let dict = match &config.dictionary {
                Some(p) => LabelDictionary::from_toml(&fs::read_to_string(p).map_err(io_err(p))?)?,
                None => LabelDictionary::seed(),
            };
            write_atomic(&dict_path, dict.to_toml().as_bytes())?;
            dict
        };
        if dict_path.exists() && config.dictionary.is_some() {
            log::info!("store already has a dictionary; the seed file only applies to fresh stores");
        }

        let mut drivers = BTreeMap::new();
        for path in read_dir_sorted(&root.join("drivers"), "toml")? {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let manifest = parse_manifest(&text)?;
            drivers.insert(manifest.driver_id.clone(), Arc::new(Driver { manifest, text }));
        }

        let mappings_path = root.join("mappings.json");
        let mappings = if mappings_path.exists() {
            MappingBook::from_mappings(read_json::<Vec<LabelMapping>>(&mappings_path)?)
        } else {
            MappingBook::new()
        };

        let mut jobs = BTreeMap::new();
        for path in read_dir_sorted(&root.join("jobs"), "json")? {
            let job: ImportJob = read_json(&path)?;
            jobs.insert(job.job_id.clone(), job);
        }

        let mut models = BTreeMap::new();
        for path in read_dir_sorted(&root.join("models"), "json")? {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let model = crate::classifier::deserialize(&bytes)?;
            models.insert(model.model_id.clone(), Arc::new(model));
        }
        let mut training = BTreeMap::new();
        for path in read_dir_sorted(&root.join("training"), "json")? {
            let job: TrainingJob = read_json(&path)?;
            training.insert(job.model_id.clone(), job);
        }

        let platform = Self {
            root,
            store,
            _lock: lock,
            dictionary: RwLock::new(dictionary),
            drivers: RwLock::new(drivers),
            mappings: Mutex::new(mappings),
            jobs: RwLock::new(jobs),
            finalizing: Mutex::new(HashSet::new()),
            models: RwLock::new(models),
            training: RwLock::new(training),
        };
        platform.recover()?;
        Ok(platform)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn store(&self) -> &UnifiedStore {
        &self.store
    }

    // ---- drivers

    /// Registers a manifest. The manifest text is kept verbatim.
    pub fn add_driver(&self, text: &str) -> Result<DriverInfo> {
        let manifest = parse_manifest(text)?;
        let id = manifest.driver_id.clone();
        if !is_safe_id(&id) {
            return Err(invalid(format!("driver_id {id:?} must be alphanumeric, '_', '-' or '.'")));
        }
        let mut drivers = self.drivers.write().expect("drivers lock");
        if drivers.contains_key(&id) {
            return Err(PlatformError::DriverExists(id));
        }
        write_atomic(&self.root.join("drivers").join(format!("{id}.toml")), text.as_bytes())?;
        let driver = Arc::new(Driver {
            manifest,
            text: text.to_string(),
        });
        let info = driver_info(&driver);
        drivers.insert(id, driver);
        Ok(info)
    }

    pub fn drivers(&self) -> Vec<DriverInfo> {
        self.drivers.read().expect("drivers lock").values().map(|d| driver_info(d)).collect()
    }

    fn driver(&self, id: &str) -> Result<Arc<Driver>> {
        self.drivers
            .read()
            .expect("drivers lock")
            .get(id)
            .cloned()
            .ok_or_else(|| PlatformError::DriverNotFound(id.to_string()))
    }

    // ---- dictionary

    pub fn dictionary(&self) -> LabelDictionary {
        self.dictionary.read().expect("dictionary lock").clone()
    }

    pub fn add_label(&self, name: &str, entry: LabelEntry) -> Result<()> {
        let mut dict = self.dictionary.write().expect("dictionary lock");
        let mut next = dict.clone();
        match next.insert(name, entry) {
            Err(DictionaryError::DuplicateCanonical(n)) => return Err(PlatformError::LabelExists(n)),
            other => other?,
        }
        write_atomic(&self.root.join("dictionary.toml"), next.to_toml().as_bytes())?;
        *dict = next;
        Ok(())
    }

    // ---- label mappings

    fn lock_mappings(&self) -> MutexGuard<'_, MappingBook> {
        self.mappings.lock().expect("mappings lock")
    }

    fn save_mappings(&self, book: &MappingBook) -> Result<()> {
        let all: Vec<&LabelMapping> = book.iter().collect();
        let json = serde_json::to_vec_pretty(&all).expect("mappings serialize");
        write_atomic(&self.root.join("mappings.json"), &json)?;
        Ok(())
    }

    pub fn mappings(&self, dataset_id: Option<&str>, status: Option<&str>) -> Result<Vec<LabelMapping>> {
        if let Some(s) = status {
            if !["pending", "accepted", "rejected", "manual"].contains(&s) {
                return Err(invalid(format!("unknown mapping status {s:?}")));
            }
        }
        Ok(self.lock_mappings().list(dataset_id, status).into_iter().cloned().collect())
    }

    pub fn mapping(&self, mapping_id: &str) -> Result<LabelMapping> {
        self.lock_mappings()
            .get(mapping_id)
            .cloned()
            .ok_or_else(|| LabelError::NotFound(mapping_id.to_string()).into())
    }

    pub fn decide(&self, mapping_id: &str, decision: Decision, who: &str) -> Result<LabelMapping> {
        let dict = self.dictionary();
        let mut book = self.lock_mappings();
        let before = book.get(mapping_id).cloned();
        let mapping = book.decide(mapping_id, decision, who, &dict)?.clone();
        if before.as_ref() != Some(&mapping) {
            self.save_mappings(&book)?;
        }
        Ok(mapping)
    }

    /// Records a decision for a raw label before (or independently of) an
    /// import, so that datasets with known vocabularies finalize without a
    /// review round. The decision is still an explicit human act.
    pub fn predecide(&self, dataset_id: &str, raw_label: &str, decision: Decision, who: &str) -> Result<LabelMapping> {
        if !is_safe_id(dataset_id) {
            return Err(invalid(format!("invalid dataset_id {dataset_id:?}")));
        }
        if crate::model::normalize_label_text(raw_label).is_empty() {
            return Err(invalid("raw_label is empty"));
        }
        let dict = self.dictionary();
        let mut book = self.lock_mappings();
        let (mapping, _) = book.ensure(dataset_id, raw_label, &dict)?;
        let id = mapping.mapping_id.clone();
        let before = mapping.clone();
        let result = book.decide(&id, decision, who, &dict).cloned();
        match result {
            Ok(m) => {
                if m != before {
                    self.save_mappings(&book)?;
                }
                Ok(m)
            }
            Err(e) => {
                // keep the freshly created pending mapping only if it is persisted
                self.save_mappings(&book)?;
                Err(e.into())
            }
        }
    }

    // ---- data distribution

    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<CatalogEntry>> {
        Ok(composer::query(&self.store.entries(), filter, &self.dictionary())?)
    }

    /// One recording as CSV text or its verified segment bytes.
    pub fn export_recording(&self, recording_id: &str, format: ExportFormat) -> Result<Vec<u8>> {
        match format {
            ExportFormat::Uds => Ok(self.store.segment_bytes(recording_id)?.1),
            ExportFormat::Csv => {
                let rec = self.store.read_recording(recording_id)?;
                let mut buf = Vec::new();
                composer::write_csv(&rec, &mut buf).expect("writing to memory");
                Ok(buf)
            }
        }
    }

    pub fn export(&self, filter: &QueryFilter, format: ExportFormat, dest: &Path) -> Result<Vec<PathBuf>> {
        let entries = self.query(filter)?;
        Ok(composer::export(&self.store, &entries, format, dest)?)
    }
}

fn driver_info(d: &Driver) -> DriverInfo {
    DriverInfo {
        driver_id: d.manifest.driver_id.clone(),
        layout: d.manifest.layout.to_string(),
        unit: d.manifest.unit.to_string(),
        includes_gravity: d.manifest.includes_gravity,
        manifest: d.text.clone(),
    }
}
