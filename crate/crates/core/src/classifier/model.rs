use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_SPEC_VERSION, N_FEATURES};
use super::{real, ClassifierError};
use crate::model::new_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    NearestCentroid,
    Knn { k: usize },
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::NearestCentroid => f.write_str("nearest_centroid"),
            ModelKind::Knn { k } => write!(f, "knn(k={k})"),
        }
    }
}

/// Per-feature `(v - mean) / std`. Features with zero training variance are
/// kept with std 1 and listed in `zero_variance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    #[serde(with = "real::vec")]
    pub mean: Vec<f64>,
    #[serde(with = "real::vec")]
    pub std: Vec<f64>,
    pub zero_variance: Vec<usize>,
}

impl Standardization {
    fn fit(vectors: &[&FeatureVector]) -> Self {
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; N_FEATURES];
        let mut std = vec![0.0; N_FEATURES];
        let mut zero_variance = Vec::new();
        for j in 0..N_FEATURES {
            let m = vectors.iter().map(|v| v[j]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v[j] - m) * (v[j] - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean[j] = m;
            if s > 0.0 && s.is_finite() {
                std[j] = s;
            } else {
                std[j] = 1.0;
                zero_variance.push(j);
            }
        }
        Self { mean, std, zero_variance }
    }

    pub fn apply(&self, v: &FeatureVector) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    NearestCentroid {
        #[serde(with = "real::map")]
        centroids: BTreeMap<String, Vec<f64>>,
    },
    Knn {
        k: usize,
        #[serde(with = "real::matrix")]
        vectors: Vec<Vec<f64>>,
        labels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset_ids: Vec<String>,
    /// Window length, overlap and majority threshold used to cut the frames.
    #[serde(with = "real::opt_vec", default)]
    pub windowing: Option<Vec<f64>>,
    pub n_frames: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub single_class: bool,
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model_id: String,
    pub kind: ModelKind,
    pub feature_spec_version: u32,
    /// Sorted class labels.
    pub labels: Vec<String>,
    pub standardization: Standardization,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
}

/// Trains a model on labeled feature vectors. With `classes`, every listed
/// class must have at least one frame.
pub fn train(
    frames: &[(FeatureVector, String)],
    kind: ModelKind,
    classes: Option<&[String]>,
) -> Result<TrainedModel, ClassifierError> {
    if frames.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if let ModelKind::Knn { k: 0 } = kind {
        return Err(ClassifierError::InvalidK);
    }
    if frames.iter().any(|(v, _)| v.iter().any(|x| !x.is_finite())) {
        return Err(ClassifierError::NonFiniteFeature);
    }
    let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, label) in frames {
        *class_counts.entry(label.clone()).or_default() += 1;
    }
    if let Some(classes) = classes {
        for c in classes {
            if !class_counts.contains_key(c) {
                return Err(ClassifierError::ClassWithNoFrames(c.clone()));
            }
        }
    }
    let labels: Vec<String> = class_counts.keys().cloned().collect();
    let vectors: Vec<&FeatureVector> = frames.iter().map(|(v, _)| v).collect();
    let standardization = Standardization::fit(&vectors);
    let standardized: Vec<Vec<f64>> = frames.iter().map(|(v, _)| standardization.apply(v)).collect();

    let params = match kind {
        ModelKind::NearestCentroid => {
            let mut sums: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((_, label), v) in frames.iter().zip(&standardized) {
                let sum = sums.entry(label.clone()).or_insert_with(|| vec![0.0; N_FEATURES]);
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            for (label, sum) in sums.iter_mut() {
                let n = class_counts[label] as f64;
                sum.iter_mut().for_each(|s| *s /= n);
            }
            ModelParams::NearestCentroid { centroids: sums }
        }
        ModelKind::Knn { k } => ModelParams::Knn {
            k,
            vectors: standardized,
            labels: frames.iter().map(|(_, l)| l.clone()).collect(),
        },
    };
    if labels.len() == 1 {
        log::warn!("training a single-class model for {:?}", labels[0]);
    }
    Ok(TrainedModel {
        model_id: new_id(),
        kind,
        feature_spec_version: FEATURE_SPEC_VERSION,
        standardization,
        params,
        metadata: TrainingMetadata {
            n_frames: frames.len(),
            single_class: labels.len() == 1,
            class_counts,
            created_at: Some(Utc::now()),
            ..TrainingMetadata::default()
        },
        labels,
    })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Classifies one feature vector.
///
/// Nearest centroid: smallest Euclidean distance, ties to the smaller label;
/// confidence is the softmax of negative distances. kNN: majority among the
/// `min(k, n)` nearest training vectors (distance ties broken by training
/// order), vote ties to the smaller mean distance then the smaller label;
/// confidence is votes over `min(k, n)`.
pub fn predict(model: &TrainedModel, v: &FeatureVector) -> Result<Prediction, ClassifierError> {
    if model.feature_spec_version != FEATURE_SPEC_VERSION {
        return Err(ClassifierError::FeatureSpecMismatch {
            model: model.feature_spec_version,
            expected: FEATURE_SPEC_VERSION,
        });
    }
    let z = model.standardization.apply(v);
    match &model.params {
        ModelParams::NearestCentroid { centroids } => {
            let dists: Vec<(&String, f64)> = centroids.iter().map(|(l, c)| (l, euclidean(&z, c))).collect();
            let (best, d_best) = dists
                .iter()
                .fold(None::<(&String, f64)>, |acc, &(l, d)| match acc {
                    Some((_, bd)) if bd <= d => acc,
                    _ => Some((l, d)),
                })
                .ok_or(ClassifierError::EmptyTrainingSet)?;
            let denom: f64 = dists.iter().map(|(_, d)| (-(d - d_best)).exp()).sum();
            Ok(Prediction {
                label: best.clone(),
                confidence: 1.0 / denom,
            })
        }
        ModelParams::Knn { k, vectors, labels } => {
            let mut order: Vec<(f64, usize)> = vectors.iter().enumerate().map(|(i, t)| (euclidean(&z, t), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let k_eff = (*k).min(order.len());
            if k_eff == 0 {
                return Err(ClassifierError::EmptyTrainingSet);
            }
            let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
            for &(d, i) in &order[..k_eff] {
                let e = votes.entry(labels[i].as_str()).or_default();
                e.0 += 1;
                e.1 += d;
            }
            let mut best: Option<(&str, usize, f64)> = None;
            for (label, (n, sum)) in votes {
                let mean = sum / n as f64;
                let better = match best {
                    None => true,
                    Some((_, bn, bm)) => n > bn || (n == bn && mean < bm),
                };
                if better {
                    best = Some((label, n, mean));
                }
            }
            let (label, n, _) = best.expect("k_eff > 0");
            Ok(Prediction {
                label: label.to_string(),
                confidence: n as f64 / k_eff as f64,
            })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

pub const MODEL_FORMAT: &str = "har-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn serialize(model: &TrainedModel) -> Vec<u8> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    serde_json::to_vec_pretty(&file).expect("model serializes")
}

pub fn deserialize(bytes: &[u8]) -> Result<TrainedModel, ClassifierError> {
    let bad = |m: String| ClassifierError::InvalidModelFile(m);
    let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(bad(format!("format is {:?}", file.format)));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(bad(format!("unsupported version {}", file.version)));
    }
    let m = file.model;
    let st = &m.standardization;
    if st.mean.len() != N_FEATURES || st.std.len() != N_FEATURES {
        return Err(bad("standardization length".into()));
    }
    if st.std.iter().any(|s| s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) || st.zero_variance.iter().any(|j| *j >= N_FEATURES) {
        return Err(bad("standardization std must be positive".into()));
    }
    let mut labels_sorted = m.labels.clone();
    labels_sorted.sort();
    labels_sorted.dedup();
    if m.labels.is_empty() || labels_sorted != m.labels {
        return Err(bad("labels must be non-empty, sorted and unique".into()));
    }
    match (&m.kind, &m.params) {
        (ModelKind::NearestCentroid, ModelParams::NearestCentroid { centroids }) => {
            if centroids.keys().ne(m.labels.iter()) || centroids.values().any(|c| c.len() != N_FEATURES) {
                return Err(bad("centroids do not match labels".into()));
            }
        }
        (ModelKind::Knn { k }, ModelParams::Knn { k: pk, vectors, labels }) => {
            if k != pk || *k == 0 || vectors.len() != labels.len() || vectors.is_empty() {
                return Err(bad("knn parameters are inconsistent".into()));
            }
            if vectors.iter().any(|v| v.len() != N_FEATURES) || labels.iter().any(|l| m.labels.binary_search(l).is_err()) {
                return Err(bad("knn vectors do not match labels".into()));
            }
        }
        _ => return Err(bad("kind does not match params".into())),
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(value: f64) -> FeatureVector {
        [value; N_FEATURES]
    }

    fn point(pattern: &[f64]) -> FeatureVector {
        std::array::from_fn(|j| pattern[j % pattern.len()])
    }

    #[test]
    fn centroids_of_two_points() {
        let frames = vec![(point(&[1.0, 3.0]), "a".to_string()), (point(&[3.0, -1.0]), "b".to_string())];
        let m = train(&frames, ModelKind::NearestCentroid, None).unwrap();
        let ModelParams::NearestCentroid { centroids } = &m.params else { panic!() };
        // two points standardize to ±1 on every feature
        assert_eq!(centroids["a"][0], -1.0);
        assert_eq!(centroids["a"][1], 1.0);
        assert_eq!(centroids["b"][0], 1.0);
        assert_eq!(centroids["b"][1], -1.0);
        let p = predict(&m, &frames[0].0).unwrap();
        assert_eq!(p.label, "a");
        // d_best = 0, other centroid at distance 2·√23
        let expected = 1.0 / (1.0 + (-2.0 * (N_FEATURES as f64).sqrt()).exp());
        assert!((p.confidence - expected).abs() < 1e-15);
    }

    #[test]
    fn single_class_predicts_itself() {
        let frames = vec![(at(1.0), "sitting".to_string()), (at(2.0), "sitting".to_string())];
        let m = train(&frames, ModelKind::NearestCentroid, None).unwrap();
        assert!(m.metadata.single_class);
        let p = predict(&m, &at(100.0)).unwrap();
        assert_eq!(p, Prediction { label: "sitting".into(), confidence: 1.0 });
    }

    #[test]
    fn midway_goes_to_smaller_label() {
        let frames = vec![(at(0.0), "zeta".to_string()), (at(2.0), "alpha".to_string())];
        let m = train(&frames, ModelKind::NearestCentroid, None).unwrap();
        let p = predict(&m, &at(1.0)).unwrap();
        assert_eq!(p.label, "alpha");
        assert_eq!(p.confidence, 0.5);
    }

    #[test]
    fn zero_variance_features_flagged() {
        let frames = vec![(at(1.0), "a".to_string()), (at(1.0), "b".to_string())];
        let m = train(&frames, ModelKind::NearestCentroid, None).unwrap();
        assert_eq!(m.standardization.zero_variance.len(), N_FEATURES);
        assert!(m.standardization.std.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train(&[], ModelKind::NearestCentroid, None), Err(ClassifierError::EmptyTrainingSet)));
        let frames = vec![(at(1.0), "a".to_string())];
        let classes = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            train(&frames, ModelKind::NearestCentroid, Some(&classes)),
            Err(ClassifierError::ClassWithNoFrames(c)) if c == "b"
        ));
        assert!(matches!(train(&frames, ModelKind::Knn { k: 0 }, None), Err(ClassifierError::InvalidK)));
    }

    #[test]
    fn knn_votes_and_ties() {
        let frames = vec![
            (at(0.0), "a".to_string()),
            (at(0.1), "a".to_string()),
            (at(1.0), "b".to_string()),
            (at(1.1), "b".to_string()),
        ];
        let m = train(&frames, ModelKind::Knn { k: 3 }, None).unwrap();
        let p = predict(&m, &at(0.05)).unwrap();
        assert_eq!(p.label, "a");
        assert!((p.confidence - 2.0 / 3.0).abs() < 1e-15);
        // k larger than the training set counts every vector
        let m = train(&frames, ModelKind::Knn { k: 10 }, None).unwrap();
        let p = predict(&m, &at(0.9)).unwrap();
        assert_eq!(p.label, "b");
        assert_eq!(p.confidence, 0.5);
    }

    #[test]
    fn version_mismatch() {
        let mut m = train(&[(at(1.0), "a".to_string())], ModelKind::NearestCentroid, None).unwrap();
        m.feature_spec_version = 2;
        assert!(matches!(predict(&m, &at(1.0)), Err(ClassifierError::FeatureSpecMismatch { .. })));
    }

    #[test]
    fn wire_round_trip_and_shape() {
        let frames = vec![
            (point(&[0.1, 1e-300, -0.0]), "a".to_string()),
            (point(&[1.0 / 3.0, 2.5, 7.0]), "b".to_string()),
        ];
        for kind in [ModelKind::NearestCentroid, ModelKind::Knn { k: 1 }] {
            let m = train(&frames, kind, None).unwrap();
            let bytes = serialize(&m);
            let back = deserialize(&bytes).unwrap();
            assert_eq!(back, m);
            let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            assert_eq!(v["format"], "har-model");
            assert_eq!(v["version"], 1);
            assert!(v["standardization"]["mean"][0].is_string());
        }
        assert!(deserialize(b"{\"format\":\"other\"}").is_err());
    }
}
