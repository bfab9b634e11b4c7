use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{invalid, Platform, PlatformError, Result};
use crate::aligner::{align, GravityPolicy};
use crate::driver::{discover, parse_recording};
use crate::labels::{apply_mappings, LabelError};
use crate::model::new_id;
use crate::store::{is_safe_id, write_atomic, FileError, ImportJob, JobState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyOutcome {
    pub dataset_id: String,
    pub job_id: String,
    pub relabeled_spans: usize,
    pub dropped_spans: usize,
    pub stored: usize,
}

struct ClaimGuard<'a> {
    platform: &'a Platform,
    dataset_id: String,
}

impl Drop for ClaimGuard<'_> {
    fn drop(&mut self) {
        self.platform.finalizing.lock().expect("claims lock").remove(&self.dataset_id);
    }
}

impl Platform {
    fn save_job(&self, job: &ImportJob) -> Result<()> {
        let json = serde_json::to_vec_pretty(job).expect("job serializes");
        write_atomic(&self.root.join("jobs").join(format!("{}.json", job.job_id)), &json)?;
        Ok(())
    }

    fn update_job(&self, job_id: &str, f: impl FnOnce(&mut ImportJob)) -> Result<ImportJob> {
        let mut jobs = self.jobs.write().expect("jobs lock");
        let job = jobs
            .get_mut(job_id)
            .ok_or_else(|| PlatformError::JobNotFound(job_id.to_string()))?;
        f(job);
        job.updated_at = chrono::Utc::now();
        let snapshot = job.clone();
        drop(jobs);
        self.save_job(&snapshot)?;
        Ok(snapshot)
    }

    fn fail_job(&self, job_id: &str, reason: String) -> Result<ImportJob> {
        log::warn!("import {job_id} failed: {reason}");
        let job = self.update_job(job_id, |j| {
            j.advance(JobState::Failed { reason });
        })?;
        self.store.staging().clear(&job.dataset_id)?;
        Ok(job)
    }

    pub fn import_job(&self, job_id: &str) -> Result<ImportJob> {
        self.jobs
            .read()
            .expect("jobs lock")
            .get(job_id)
            .cloned()
            .ok_or_else(|| PlatformError::JobNotFound(job_id.to_string()))
    }

    pub fn import_jobs(&self) -> Vec<ImportJob> {
        self.jobs.read().expect("jobs lock").values().cloned().collect()
    }

    /// Validates and records an import. The pipeline itself runs in
    /// [`Platform::run_import`].
    pub fn start_import(&self, driver_id: &str, dataset_id: &str, root: &str, strip_gravity: bool) -> Result<ImportJob> {
        self.driver(driver_id)?;
        if !is_safe_id(dataset_id) {
            return Err(invalid(format!(
                "dataset_id {dataset_id:?} must be alphanumeric, '_', '-' or '.'"
            )));
        }
        if root.is_empty() {
            return Err(invalid("root is empty"));
        }
        let mut jobs = self.jobs.write().expect("jobs lock");
        let taken = jobs
            .values()
            .any(|j| j.dataset_id == dataset_id && !matches!(j.state, JobState::Failed { .. }))
            || self.store.entries().iter().any(|e| e.dataset_id == dataset_id);
        if taken {
            return Err(PlatformError::DatasetExists(dataset_id.to_string()));
        }
        let job = ImportJob::new(new_id(), driver_id, dataset_id, root, strip_gravity);
        self.save_job(&job)?;
        jobs.insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    /// Runs discovery, parsing, alignment and staging for a recorded job,
    /// then finalizes right away if every raw label already has a decision.
    /// Returns the job in `awaiting_labels` or a terminal state.
    pub fn run_import(&self, job_id: &str) -> Result<ImportJob> {
        let job = self.import_job(job_id)?;
        if job.state != JobState::Staged {
            return Ok(job);
        }
        match self.stage_files(&job) {
            Ok(job) if job.state == JobState::AwaitingLabels => match self.apply_labels(&job.dataset_id) {
                Ok(_) => self.import_job(job_id),
                Err(PlatformError::Label(LabelError::PendingMappingsRemain(_))) => Ok(job),
                Err(e) => self.fail_job(job_id, e.to_string()),
            },
            Ok(job) => Ok(job),
            Err(e) => self.fail_job(job_id, e.to_string()),
        }
    }

    fn stage_files(&self, job: &ImportJob) -> Result<ImportJob> {
        let driver = self.driver(&job.driver_id)?;
        let manifest = &driver.manifest;
        let root = Path::new(&job.root_path);
        let sources = match discover(root, manifest) {
            Ok(s) => s,
            Err(e) => return self.fail_job(&job.job_id, e.to_string()),
        };
        self.update_job(&job.job_id, |j| j.counts.discovered = sources.len())?;
        if sources.is_empty() {
            return self.fail_job(&job.job_id, format!("no files under {} match {}", job.root_path, manifest.layout));
        }
        let policy = if job.strip_gravity {
            GravityPolicy::StripGravity
        } else {
            GravityPolicy::KeepGravity
        };
        let staging = self.store.staging();
        let mut raw_labels = BTreeSet::new();
        for src in &sources {
            let file_error = |stage: &str, message: String| FileError {
                path: src.relative_path.clone(),
                stage: stage.to_string(),
                message,
            };
            let raw = match parse_recording(src, manifest, &job.dataset_id) {
                Ok(r) => r,
                Err(e) => {
                    let err = file_error("parse", e.to_string());
                    self.update_job(&job.job_id, |j| j.file_errors.push(err))?;
                    continue;
                }
            };
            self.update_job(&job.job_id, |j| j.counts.parsed += 1)?;
            let rec = match align(&raw, &manifest.axis_map, policy) {
                Ok(r) => r,
                Err(e) => {
                    let err = file_error("align", e.to_string());
                    self.update_job(&job.job_id, |j| j.file_errors.push(err))?;
                    continue;
                }
            };
            staging.stage(&rec, &src.relative_path)?;
            raw_labels.extend(rec.label_spans.iter().map(|s| s.label.clone()));
            self.update_job(&job.job_id, |j| j.counts.aligned += 1)?;
        }
        let job = self.import_job(&job.job_id)?;
        if job.counts.aligned == 0 {
            return self.fail_job(
                &job.job_id,
                format!("none of {} discovered files survived parsing and alignment", job.counts.discovered),
            );
        }
        {
            let dict = self.dictionary();
            let mut book = self.lock_mappings();
            let mut created = false;
            for raw in &raw_labels {
                created |= book.ensure(&job.dataset_id, raw, &dict)?.1;
            }
            if created {
                self.save_mappings(&book)?;
            }
        }
        self.update_job(&job.job_id, |j| {
            j.advance(JobState::AwaitingLabels);
        })
    }

    /// Rewrites a staged dataset's raw labels through the decided mappings
    /// and commits its recordings to the unified store.
    pub fn apply_labels(&self, dataset_id: &str) -> Result<ApplyOutcome> {
        if !self.finalizing.lock().expect("claims lock").insert(dataset_id.to_string()) {
            return Err(PlatformError::DatasetBusy(dataset_id.to_string()));
        }
        let _claim = ClaimGuard {
            platform: self,
            dataset_id: dataset_id.to_string(),
        };
        let job = self
            .jobs
            .read()
            .expect("jobs lock")
            .values()
            .find(|j| {
                j.dataset_id == dataset_id && matches!(j.state, JobState::AwaitingLabels | JobState::Finalizing)
            })
            .cloned()
            .ok_or_else(|| PlatformError::NothingStaged(dataset_id.to_string()))?;

        let staging = self.store.staging();
        let staged: Vec<_> = staging.load(dataset_id)?.into_iter().map(|(_, rec)| rec).collect();
        let total_spans: usize = staged.iter().map(|r| r.label_spans.len()).sum();
        let (relabeled, relabeled_spans) = apply_mappings(&self.lock_mappings(), dataset_id, &staged)?;

        self.update_job(&job.job_id, |j| {
            j.advance(JobState::Finalizing);
        })?;
        let dict = self.dictionary();
        let mut stored = 0;
        for rec in &relabeled {
            if !self.store.contains(&rec.recording_id) {
                let violations = rec.check(Some(&dict));
                if !violations.is_empty() {
                    return Err(crate::store::StoreError::InvalidRecording(violations).into());
                }
                self.store.append_recording(rec)?;
            }
            staging.remove(dataset_id, &rec.recording_id)?;
            stored += 1;
            self.update_job(&job.job_id, |j| j.counts.stored = j.counts.stored.max(stored))?;
        }
        staging.clear(dataset_id)?;
        self.update_job(&job.job_id, |j| {
            j.advance(JobState::Complete);
        })?;
        Ok(ApplyOutcome {
            dataset_id: dataset_id.to_string(),
            job_id: job.job_id,
            relabeled_spans,
            dropped_spans: total_spans - relabeled_spans,
            stored,
        })
    }

    /// Settles jobs interrupted by a restart: unfinished pipelines fail,
    /// interrupted finalizations resume.
    pub(super) fn recover(&self) -> Result<()> {
        for job in self.import_jobs() {
            match job.state {
                JobState::Staged => {
                    self.fail_job(&job.job_id, "interrupted by a restart before staging finished".into())?;
                }
                JobState::Finalizing => {
                    log::info!("resuming finalization of {}", job.dataset_id);
                    self.apply_labels(&job.dataset_id)?;
                }
                _ => {}
            }
        }
        let running: Vec<_> = self
            .training
            .read()
            .expect("training lock")
            .values()
            .filter(|j| j.state == super::TrainState::Running)
            .cloned()
            .collect();
        for mut job in running {
            job.state = super::TrainState::Failed {
                reason: "interrupted by a restart".into(),
            };
            job.updated_at = chrono::Utc::now();
            self.set_training(job)?;
        }
        Ok(())
    }
}
