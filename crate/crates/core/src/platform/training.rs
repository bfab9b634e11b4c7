use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{invalid, Platform, PlatformError, Result};
use crate::classifier::{
    classify_raw, evaluate, extract_features, serialize, split_indices, train, EvalReport, FeatureVector, ModelKind,
    SplitSpec, TrainedModel, WindowClassification,
};
use crate::composer::{windows, QueryFilter, WindowingSpec};
use crate::model::{new_id, Sample, CANONICAL_RATE_HZ};
use crate::store::write_atomic;

fn default_kind() -> ModelKind {
    ModelKind::NearestCentroid
}

fn default_split() -> Option<SplitSpec> {
    Some(SplitSpec::default())
}

/// Frames, the datasets they came from, and the requested classes if the
/// filter named labels.
pub type TrainingFrames = (Vec<(FeatureVector, String)>, Vec<String>, Option<Vec<String>>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub filter: QueryFilter,
    #[serde(default)]
    pub windowing: WindowingSpec,
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    /// Holdout used for the evaluation report; `null` evaluates on the
    /// training frames.
    #[serde(default = "default_split")]
    pub split: Option<SplitSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrainState {
    Running,
    Complete,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub model_id: String,
    pub request: TrainRequest,
    #[serde(flatten)]
    pub state: TrainState,
    pub report: Option<EvalReport>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub state: String,
    pub kind: ModelKind,
    pub labels: Vec<String>,
    pub dataset_ids: Vec<String>,
    pub n_frames: usize,
    pub accuracy: Option<f64>,
    pub created_at: Option<DateTime<Utc>>,
}

impl Platform {
    fn save_training(&self, job: &TrainingJob) -> Result<()> {
        let json = serde_json::to_vec_pretty(job).expect("training job serializes");
        write_atomic(&self.root.join("training").join(format!("{}.json", job.model_id)), &json)?;
        Ok(())
    }

    pub(super) fn set_training(&self, job: TrainingJob) -> Result<TrainingJob> {
        self.save_training(&job)?;
        self.training
            .write()
            .expect("training lock")
            .insert(job.model_id.clone(), job.clone());
        Ok(job)
    }

    /// Validates a training request and records it. The model id is fixed
    /// here; the work happens in [`Platform::run_training`].
    pub fn start_training(&self, request: TrainRequest) -> Result<TrainingJob> {
        request.windowing.validate(CANONICAL_RATE_HZ).map_err(PlatformError::Composer)?;
        if let ModelKind::Knn { k: 0 } = request.kind {
            return Err(invalid("knn needs k ≥ 1"));
        }
        if let Some(split) = &request.split {
            if !(0.0..1.0).contains(&split.test_fraction) {
                return Err(invalid("split.test_fraction must be in [0, 1)"));
            }
        }
        self.query(&request.filter)?;
        let now = Utc::now();
        self.set_training(TrainingJob {
            model_id: new_id(),
            request,
            state: TrainState::Running,
            report: None,
            created_at: now,
            updated_at: now,
        })
    }

    pub fn training_job(&self, model_id: &str) -> Result<TrainingJob> {
        self.training
            .read()
            .expect("training lock")
            .get(model_id)
            .cloned()
            .ok_or_else(|| PlatformError::UnknownModel(model_id.to_string()))
    }

    pub fn run_training(&self, model_id: &str) -> Result<TrainingJob> {
        let mut job = self.training_job(model_id)?;
        if job.state != TrainState::Running {
            return Ok(job);
        }
        match self.build_model(&job) {
            Ok((model, report)) => {
                self.register(model)?;
                job.state = TrainState::Complete;
                job.report = Some(report);
            }
            Err(e) => {
                log::warn!("training {model_id} failed: {e}");
                job.state = TrainState::Failed { reason: e.to_string() };
            }
        }
        job.updated_at = Utc::now();
        self.set_training(job)
    }

    /// Labeled feature frames for a filter, in recording then window order.
    pub fn training_frames(
        &self,
        filter: &QueryFilter,
        spec: &WindowingSpec,
    ) -> Result<TrainingFrames> {
        let entries = self.query(filter)?;
        let dict = self.dictionary();
        let wanted: Option<Vec<String>> = filter.labels.as_ref().map(|ls| {
            ls.iter()
                .filter_map(|l| dict.resolve(l).map(str::to_string))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        });
        let mut frames = Vec::new();
        let mut datasets = BTreeSet::new();
        for e in &entries {
            let rec = self.store.read_recording(&e.recording_id)?;
            for w in windows(&rec, spec)? {
                if wanted.as_ref().is_none_or(|ls| ls.contains(&w.label)) {
                    datasets.insert(e.dataset_id.clone());
                    frames.push((extract_features(&w.data), w.label));
                }
            }
        }
        Ok((frames, datasets.into_iter().collect(), wanted))
    }

    fn build_model(&self, job: &TrainingJob) -> Result<(TrainedModel, EvalReport)> {
        let req = &job.request;
        let (frames, dataset_ids, classes) = self.training_frames(&req.filter, &req.windowing)?;
        if frames.is_empty() {
            return Err(PlatformError::NoTrainingFrames);
        }
        let (train_frames, test_frames) = match &req.split {
            Some(split) => {
                let labels: Vec<String> = frames.iter().map(|(_, l)| l.clone()).collect();
                let (tr, te) = split_indices(&labels, split);
                (
                    tr.iter().map(|i| frames[*i].clone()).collect::<Vec<_>>(),
                    te.iter().map(|i| frames[*i].clone()).collect::<Vec<_>>(),
                )
            }
            None => (frames.clone(), frames.clone()),
        };
        let mut model = train(&train_frames, req.kind, classes.as_deref())?;
        model.model_id = job.model_id.clone();
        model.metadata.dataset_ids = dataset_ids;
        let w = &req.windowing;
        model.metadata.windowing = Some(vec![w.window_s, w.overlap_fraction, w.majority_threshold]);
        let report = evaluate(&model, &test_frames, req.split)?;
        Ok((model, report))
    }

    /// Adds a trained model to the registry. Registered models are immutable.
    pub fn register(&self, model: TrainedModel) -> Result<String> {
        let id = model.model_id.clone();
        if !crate::store::is_safe_id(&id) {
            return Err(invalid(format!("invalid model_id {id:?}")));
        }
        let mut models = self.models.write().expect("models lock");
        if models.contains_key(&id) {
            return Err(invalid(format!("model {id} is already registered")));
        }
        write_atomic(&self.root.join("models").join(format!("{id}.json")), &serialize(&model))?;
        models.insert(id.clone(), Arc::new(model));
        Ok(id)
    }

    pub fn model(&self, model_id: &str) -> Result<Arc<TrainedModel>> {
        if let Some(m) = self.models.read().expect("models lock").get(model_id) {
            return Ok(m.clone());
        }
        match self.training.read().expect("training lock").get(model_id).map(|j| &j.state) {
            Some(TrainState::Running) => Err(PlatformError::ModelNotReady(model_id.to_string())),
            Some(TrainState::Failed { reason }) => Err(PlatformError::ModelFailed {
                model_id: model_id.to_string(),
                reason: reason.clone(),
            }),
            _ => Err(PlatformError::UnknownModel(model_id.to_string())),
        }
    }

    /// The model file as served for download.
    pub fn model_file(&self, model_id: &str) -> Result<Vec<u8>> {
        Ok(serialize(&*self.model(model_id)?))
    }

    /// Registry listing: registered models plus running and failed builds,
    /// ordered by id.
    pub fn models(&self) -> Vec<ModelSummary> {
        let models = self.models.read().expect("models lock");
        let training = self.training.read().expect("training lock");
        let mut ids: BTreeSet<&String> = models.keys().collect();
        ids.extend(training.keys());
        ids.into_iter()
            .map(|id| {
                let job = training.get(id);
                match models.get(id) {
                    Some(m) => ModelSummary {
                        model_id: id.clone(),
                        state: "complete".into(),
                        kind: m.kind,
                        labels: m.labels.clone(),
                        dataset_ids: m.metadata.dataset_ids.clone(),
                        n_frames: m.metadata.n_frames,
                        accuracy: job.and_then(|j| j.report.as_ref()).map(|r| r.accuracy),
                        created_at: m.metadata.created_at,
                    },
                    None => {
                        let job = job.expect("id came from one of the maps");
                        ModelSummary {
                            model_id: id.clone(),
                            state: match &job.state {
                                TrainState::Running => "running",
                                TrainState::Complete => "complete",
                                TrainState::Failed { .. } => "failed",
                            }
                            .into(),
                            kind: job.request.kind,
                            labels: Vec::new(),
                            dataset_ids: Vec::new(),
                            n_frames: 0,
                            accuracy: None,
                            created_at: Some(job.created_at),
                        }
                    }
                }
            })
            .collect()
    }

    pub fn classify(
        &self,
        model_id: &str,
        samples: &[Sample],
        rate_hz: f64,
        spec: &WindowingSpec,
    ) -> Result<Vec<WindowClassification>> {
        let model = self.model(model_id)?;
        Ok(classify_raw(&model, samples, rate_hz, spec)?)
    }
}
