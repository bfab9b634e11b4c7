//! Baseline activity classifiers: feature extraction, nearest-centroid and
//! kNN models, evaluation, the JSON model format and raw-stream
//! classification.

mod features;
mod model;
mod real;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, feature_names, FeatureVector, FEATURE_SPEC_VERSION, N_FEATURES};
pub use model::{
    deserialize, euclidean, predict, serialize, train, ModelKind, ModelParams, Prediction, Standardization,
    TrainedModel, TrainingMetadata, MODEL_FORMAT, MODEL_FORMAT_VERSION,
};

use crate::aligner::{resample, AlignError};
use crate::composer::{ComposerError, WindowingSpec};
use crate::model::{Sample, SampleTiming, CANONICAL_RATE_HZ};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training frames")]
    EmptyTrainingSet,
    #[error("class {0:?} has no training frames")]
    ClassWithNoFrames(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("training features contain non-finite values")]
    NonFiniteFeature,
    #[error("model uses feature spec {model}, this build computes {expected}")]
    FeatureSpecMismatch { model: u32, expected: u32 },
    #[error("invalid model file: {0}")]
    InvalidModelFile(String),
    #[error("{got} samples is shorter than one window of {needed}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid input samples: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Windowing(#[from] ComposerError),
}

/// Precision is `None` for a class that was never predicted, recall for a
/// class absent from the test frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Row and column order of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub n_test: usize,
    pub split: Option<SplitSpec>,
}

pub fn evaluate(
    model: &TrainedModel,
    frames: &[(FeatureVector, String)],
    split: Option<SplitSpec>,
) -> Result<EvalReport, ClassifierError> {
    let labels: Vec<String> = model
        .labels
        .iter()
        .cloned()
        .chain(frames.iter().map(|(_, l)| l.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pos = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).expect("label collected");
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    for (v, truth) in frames {
        let p = predict(model, v)?;
        confusion[pos(truth)][pos(&p.label)] += 1;
    }
    let n_test = frames.len();
    let correct: usize = (0..labels.len()).map(|i| confusion[i][i]).sum();
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let tp = confusion[i][i] as f64;
            let metrics = ClassMetrics {
                precision: (predicted > 0).then(|| tp / predicted as f64),
                recall: (support > 0).then(|| tp / support as f64),
                support,
            };
            (l.clone(), metrics)
        })
        .collect();
    Ok(EvalReport {
        accuracy: if n_test == 0 { 0.0 } else { correct as f64 / n_test as f64 },
        labels,
        confusion,
        per_class,
        n_test,
        split,
    })
}

/// Splits frame indices into (train, test). Stratified splits shuffle each
/// class separately and hold out `round(n · test_fraction)` of it, keeping
/// at least one frame of every class for training.
pub fn split_indices(labels: &[String], spec: &SplitSpec) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            by.entry(l).or_default().push(i);
        }
        by.into_values().collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut idx in groups {
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * spec.test_fraction).round() as usize).min(idx.len().saturating_sub(1));
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowClassification {
    pub t: f64,
    pub label: String,
    pub confidence: f64,
}

/// Classifies a raw tri-axial stream window by window. Input at another
/// rate is first resampled to the canonical rate.
pub fn classify_raw(
    model: &TrainedModel,
    samples: &[Sample],
    rate_hz: f64,
    spec: &WindowingSpec,
) -> Result<Vec<WindowClassification>, ClassifierError> {
    spec.validate(CANONICAL_RATE_HZ)?;
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(ClassifierError::InvalidInput(format!("rate_hz must be positive, got {rate_hz}")));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifierError::InvalidInput("samples must be finite".into()));
    }
    let needed = spec.window_samples(CANONICAL_RATE_HZ);
    let canonical;
    let data: &[Sample] = if rate_hz == CANONICAL_RATE_HZ {
        samples
    } else {
        canonical = match resample(samples, &SampleTiming::Rate(rate_hz), CANONICAL_RATE_HZ) {
            Ok(v) => v,
            Err(AlignError::TooShort(_)) => Vec::new(),
            Err(e) => return Err(ClassifierError::InvalidInput(e.to_string())),
        };
        &canonical
    };
    if data.len() < needed {
        return Err(ClassifierError::TooShort { needed, got: data.len() });
    }
    spec.starts(data.len(), CANONICAL_RATE_HZ)
        .map(|start| {
            let f = extract_features(&data[start..start + needed]);
            let p = predict(model, &f)?;
            Ok(WindowClassification {
                t: start as f64 / CANONICAL_RATE_HZ,
                label: p.label,
                confidence: p.confidence,
            })
        })
        .collect()
}
