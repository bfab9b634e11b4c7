use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use har_core::classifier::ClassifierError;
use har_core::composer::ComposerError;
use har_core::driver::ManifestError;
use har_core::labels::LabelError;
use har_core::model::DictionaryError;
use har_core::platform::PlatformError;
use har_core::store::StoreError;

/// The body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    /// Stable machine-readable code.
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn store_error(e: &StoreError) -> ApiError {
    use StatusCode as S;
    let msg = e.to_string();
    match e {
        StoreError::DuplicateId(id) => ApiError::new(S::CONFLICT, "duplicate_recording", msg).with_detail(json!({"recording_id": id})),
        StoreError::NotFound(id) => ApiError::new(S::NOT_FOUND, "recording_not_found", msg).with_detail(json!({"recording_id": id})),
        StoreError::CorruptSegment { id, .. } => {
            ApiError::new(S::INTERNAL_SERVER_ERROR, "corrupt_segment", msg).with_detail(json!({"recording_id": id}))
        }
        StoreError::CorruptCatalog { line, .. } => {
            ApiError::new(S::INTERNAL_SERVER_ERROR, "corrupt_catalog", msg).with_detail(json!({"line": line}))
        }
        StoreError::InvalidRecording(v) => {
            ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_recording", msg).with_detail(json!({"violations": v}))
        }
        StoreError::InvalidId(id) => ApiError::new(S::BAD_REQUEST, "invalid_id", msg).with_detail(json!({"id": id})),
        StoreError::Io { .. } => ApiError::new(S::INTERNAL_SERVER_ERROR, "io_error", msg),
    }
}

fn composer_error(e: &ComposerError) -> ApiError {
    let msg = e.to_string();
    match e {
        ComposerError::Unconstrained => ApiError::bad_request("unconstrained_query", msg),
        ComposerError::UnknownLabel(l) => ApiError::bad_request("unknown_label", msg).with_detail(json!({"label": l})),
        ComposerError::InvalidWindowing(_) => ApiError::bad_request("invalid_windowing", msg),
        ComposerError::Store(s) => store_error(s),
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match &e {
            PlatformError::StoreLocked(_) => ApiError::new(S::SERVICE_UNAVAILABLE, "store_locked", msg),
            PlatformError::DriverNotFound(id) => {
                ApiError::new(S::NOT_FOUND, "driver_not_found", msg).with_detail(json!({"driver_id": id}))
            }
            PlatformError::DriverExists(id) => {
                ApiError::new(S::CONFLICT, "driver_exists", msg).with_detail(json!({"driver_id": id}))
            }
            PlatformError::Manifest(ManifestError::Syntax { line, message }) => ApiError::bad_request("manifest_syntax", msg)
                .with_detail(json!({"line": line, "reason": message})),
            PlatformError::Manifest(ManifestError::Schema { field, reason }) => ApiError::bad_request("manifest_schema", msg)
                .with_detail(json!({"field": field, "reason": reason})),
            PlatformError::Dictionary(d) => match d {
                DictionaryError::Syntax { line, .. } => {
                    ApiError::bad_request("dictionary_syntax", msg).with_detail(json!({"line": line}))
                }
                DictionaryError::DuplicateCanonical(l) => {
                    ApiError::new(S::CONFLICT, "label_exists", msg).with_detail(json!({"label": l}))
                }
                DictionaryError::AliasConflict { alias, owner } => ApiError::new(S::CONFLICT, "alias_conflict", msg)
                    .with_detail(json!({"alias": alias, "owner": owner})),
                DictionaryError::EmptyName => ApiError::bad_request("invalid_label_name", msg),
            },
            PlatformError::LabelExists(l) => ApiError::new(S::CONFLICT, "label_exists", msg).with_detail(json!({"label": l})),
            PlatformError::Label(l) => match l {
                LabelError::EmptyDictionary => ApiError::new(S::CONFLICT, "empty_dictionary", msg),
                LabelError::NotFound(id) => {
                    ApiError::new(S::NOT_FOUND, "mapping_not_found", msg).with_detail(json!({"mapping_id": id}))
                }
                LabelError::AlreadyDecided(m) => {
                    ApiError::new(S::CONFLICT, "already_decided", msg).with_detail(json!({"existing": m}))
                }
                LabelError::UnknownCanonical(c) => {
                    ApiError::bad_request("unknown_canonical", msg).with_detail(json!({"canonical": c}))
                }
                LabelError::PendingMappingsRemain(raw) => ApiError::new(S::CONFLICT, "pending_mappings_remain", msg)
                    .with_detail(json!({"raw_labels": raw})),
            },
            PlatformError::Store(s) => store_error(s),
            PlatformError::Composer(c) => composer_error(c),
            PlatformError::Classifier(c) => match c {
                ClassifierError::EmptyTrainingSet => ApiError::new(S::UNPROCESSABLE_ENTITY, "empty_training_set", msg),
                ClassifierError::ClassWithNoFrames(l) => ApiError::new(S::UNPROCESSABLE_ENTITY, "class_with_no_frames", msg)
                    .with_detail(json!({"label": l})),
                ClassifierError::InvalidK => ApiError::bad_request("invalid_k", msg),
                ClassifierError::NonFiniteFeature => ApiError::new(S::UNPROCESSABLE_ENTITY, "non_finite_feature", msg),
                ClassifierError::FeatureSpecMismatch { model, expected } => {
                    ApiError::new(S::CONFLICT, "feature_spec_mismatch", msg)
                        .with_detail(json!({"model": model, "expected": expected}))
                }
                ClassifierError::InvalidModelFile(_) => ApiError::new(S::INTERNAL_SERVER_ERROR, "invalid_model_file", msg),
                ClassifierError::TooShort { needed, got } => ApiError::new(S::UNPROCESSABLE_ENTITY, "too_short", msg)
                    .with_detail(json!({"needed": needed, "got": got})),
                ClassifierError::InvalidInput(_) => ApiError::bad_request("invalid_input", msg),
                ClassifierError::Windowing(w) => composer_error(w),
            },
            PlatformError::JobNotFound(id) => {
                ApiError::new(S::NOT_FOUND, "job_not_found", msg).with_detail(json!({"job_id": id}))
            }
            PlatformError::UnknownModel(id) => {
                ApiError::new(S::NOT_FOUND, "unknown_model", msg).with_detail(json!({"model_id": id}))
            }
            PlatformError::ModelNotReady(id) => {
                ApiError::new(S::CONFLICT, "model_not_ready", msg).with_detail(json!({"model_id": id}))
            }
            PlatformError::ModelFailed { model_id, reason } => ApiError::new(S::CONFLICT, "model_failed", msg)
                .with_detail(json!({"model_id": model_id, "reason": reason})),
            PlatformError::DatasetExists(d) => {
                ApiError::new(S::CONFLICT, "dataset_exists", msg).with_detail(json!({"dataset_id": d}))
            }
            PlatformError::DatasetBusy(d) => {
                ApiError::new(S::CONFLICT, "dataset_busy", msg).with_detail(json!({"dataset_id": d}))
            }
            PlatformError::NothingStaged(d) => {
                ApiError::new(S::CONFLICT, "nothing_staged", msg).with_detail(json!({"dataset_id": d}))
            }
            PlatformError::NoTrainingFrames => ApiError::new(S::UNPROCESSABLE_ENTITY, "no_training_frames", msg),
            PlatformError::InvalidRequest(_) => ApiError::bad_request("invalid_request", msg),
        }
    }
}
