use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, RawQuery, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use har_core::classifier::WindowClassification;
use har_core::composer::{ExportFormat, QueryFilter, WindowingSpec};
use har_core::labels::Decision;
use har_core::model::{LabelEntry, Sample};
use har_core::platform::{Platform, PlatformError, TrainRequest};

use crate::error::ApiError;

const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    platform: Arc<Platform>,
    token: Option<Arc<str>>,
}

impl AppState {
    /// An empty token disables authentication.
    pub fn new(platform: Arc<Platform>, token: Option<String>) -> Self {
        Self {
            platform,
            token: token.filter(|t| !t.is_empty()).map(Into::into),
        }
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.platform
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/drivers", get(list_drivers).post(add_driver))
        .route("/imports", get(list_imports).post(start_import))
        .route("/imports/{job_id}", get(get_import))
        .route("/labels/dictionary", get(get_dictionary).post(add_label))
        .route("/labels/mappings", get(list_mappings).post(predecide))
        .route("/labels/mappings/{mapping_id}", get(get_mapping))
        .route("/labels/mappings/{mapping_id}/decision", post(decide))
        .route("/labels/apply", post(apply_labels))
        .route("/data/query", get(query))
        .route("/data/recordings/{recording_id}", get(export_recording))
        .route("/models", get(list_models))
        .route("/models/train", post(train))
        .route("/models/{model_id}", get(get_model))
        .route("/models/{model_id}/download", get(download_model))
        .route("/classify", post(classify))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
        })
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn authorize(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        if request.uri().path() != "/health" {
            let presented = request
                .headers()
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "));
            if presented != Some(&**token) {
                return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                    .into_response();
            }
        }
    }
    next.run(request).await
}

/// Runs blocking platform work off the async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> Result<T, PlatformError> + Send + 'static,
{
    let platform = state.platform.clone();
    match tokio::task::spawn_blocking(move || f(&platform)).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::bad_request("invalid_json", format!("request body: {e}"))
            .with_detail(serde_json::json!({"line": e.line(), "column": e.column()}))
    })
}

fn media_type(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(header::CONTENT_TYPE)?.to_str().ok()?;
    Some(v.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
}

fn query_pairs(raw: &Option<String>) -> Vec<(String, String)> {
    raw.as_deref()
        .map(|q| form_urlencoded::parse(q.as_bytes()).into_owned().collect())
        .unwrap_or_default()
}

fn bad_param(name: &str, message: impl Into<String>) -> ApiError {
    ApiError::bad_request("invalid_parameter", message).with_detail(serde_json::json!({"parameter": name}))
}

fn parse_bool(name: &str, v: &str) -> ApiResult<bool> {
    match v {
        "" | "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad_param(name, format!("{name} must be true or false, got {v:?}"))),
    }
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn accepted<T: Serialize>(location: String, value: T) -> Response {
    let mut r = (StatusCode::ACCEPTED, Json(value)).into_response();
    if let Ok(v) = HeaderValue::from_str(&location) {
        r.headers_mut().insert(header::LOCATION, v);
    }
    r
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

// ---- drivers

async fn list_drivers(State(s): State<AppState>) -> Response {
    Json(s.platform.drivers()).into_response()
}

async fn add_driver(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    match media_type(&headers).as_deref() {
        Some("application/toml" | "text/toml") => {}
        other => {
            return Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_media_type",
                format!("driver manifests are uploaded as application/toml, got {}", other.unwrap_or("nothing")),
            ))
        }
    }
    let text = String::from_utf8(body.to_vec())
        .map_err(|_| ApiError::bad_request("manifest_syntax", "manifest is not UTF-8"))?;
    let info = blocking(&s, move |p| p.add_driver(&text)).await?;
    Ok(created(info))
}

// ---- imports

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportRequest {
    driver_id: String,
    dataset_id: String,
    root: String,
    #[serde(default)]
    strip_gravity: bool,
}

async fn start_import(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: ImportRequest = json_body(&body)?;
    let job = blocking(&s, move |p| p.start_import(&req.driver_id, &req.dataset_id, &req.root, req.strip_gravity)).await?;
    let platform = s.platform.clone();
    let job_id = job.job_id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = platform.run_import(&job_id) {
            log::error!("import {job_id}: {e}");
        }
    });
    Ok(accepted(format!("/imports/{}", job.job_id), job))
}

async fn list_imports(State(s): State<AppState>) -> Response {
    Json(s.platform.import_jobs()).into_response()
}

async fn get_import(State(s): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.platform.import_job(&job_id)?).into_response())
}

// ---- labels

async fn get_dictionary(State(s): State<AppState>) -> Response {
    let dict = s.platform.dictionary();
    let entries: BTreeMap<&str, &LabelEntry> = dict.iter().collect();
    Json(entries).into_response()
}

#[derive(Deserialize)]
struct NewLabel {
    name: String,
    #[serde(flatten)]
    entry: LabelEntry,
}

async fn add_label(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewLabel = json_body(&body)?;
    let name = har_core::normalize_label_text(&req.name);
    let entry = blocking(&s, move |p| {
        p.add_label(&req.name, req.entry)?;
        Ok(p.dictionary().get(&name).cloned())
    })
    .await?;
    Ok(created(entry))
}

async fn list_mappings(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let (mut dataset, mut status) = (None, None);
    for (k, v) in query_pairs(&raw) {
        match k.as_str() {
            "dataset_id" | "dataset" => dataset = Some(v),
            "status" => status = Some(v),
            other => return Err(bad_param(other, format!("unknown parameter {other:?}"))),
        }
    }
    Ok(Json(s.platform.mappings(dataset.as_deref(), status.as_deref())?).into_response())
}

async fn get_mapping(State(s): State<AppState>, Path(mapping_id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.platform.mapping(&mapping_id)?).into_response())
}

#[derive(Deserialize)]
struct DecisionRequest {
    #[serde(flatten)]
    decision: Decision,
    #[serde(default)]
    decided_by: Option<String>,
}

#[derive(Deserialize)]
struct PredecideRequest {
    dataset_id: String,
    raw_label: String,
    #[serde(flatten)]
    decision: DecisionRequest,
}

fn reviewer(who: Option<String>) -> String {
    who.filter(|w| !w.trim().is_empty()).unwrap_or_else(|| "api".to_string())
}

async fn decide(State(s): State<AppState>, Path(mapping_id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: DecisionRequest = json_body(&body)?;
    let who = reviewer(req.decided_by);
    let m = blocking(&s, move |p| p.decide(&mapping_id, req.decision, &who)).await?;
    Ok(Json(m).into_response())
}

async fn predecide(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: PredecideRequest = json_body(&body)?;
    let who = reviewer(req.decision.decided_by);
    let decision = req.decision.decision;
    let m = blocking(&s, move |p| p.predecide(&req.dataset_id, &req.raw_label, decision, &who)).await?;
    Ok(created(m))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyRequest {
    dataset_id: String,
}

async fn apply_labels(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: ApplyRequest = json_body(&body)?;
    let outcome = blocking(&s, move |p| p.apply_labels(&req.dataset_id)).await?;
    Ok(Json(outcome).into_response())
}

// ---- data

fn list_param(values: &mut Option<BTreeSet<String>>, v: &str) {
    let set = values.get_or_insert_with(BTreeSet::new);
    set.extend(v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string));
}

/// Parses the query grammar. Repeated parameters and comma lists are
/// equivalent: `label=a&label=b` is `label=a,b`.
fn parse_filter(raw: &Option<String>) -> ApiResult<(QueryFilter, usize, Option<usize>)> {
    let mut f = QueryFilter::default();
    let (mut offset, mut limit) = (0, None);
    let count = |name: &str, v: &str| {
        v.parse::<usize>()
            .map_err(|_| bad_param(name, format!("{name} must be a non-negative integer, got {v:?}")))
    };
    for (k, v) in query_pairs(raw) {
        match k.as_str() {
            "label" | "labels" => list_param(&mut f.labels, &v),
            "dataset" | "dataset_id" => list_param(&mut f.dataset_ids, &v),
            "subject" | "subject_id" => list_param(&mut f.subject_ids, &v),
            "sensor_kind" => f.sensor_kind = Some(v.parse().map_err(|e: String| bad_param("sensor_kind", e))?),
            "min_duration_s" => {
                let d: f64 = v
                    .parse()
                    .ok()
                    .filter(|d: &f64| d.is_finite())
                    .ok_or_else(|| bad_param("min_duration_s", format!("min_duration_s must be a number, got {v:?}")))?;
                f.min_duration_s = Some(d);
            }
            "include_unlabeled" => f.include_unlabeled = parse_bool("include_unlabeled", &v)?,
            "all" => f.select_all = parse_bool("all", &v)?,
            "offset" => offset = count("offset", &v)?,
            "limit" => limit = Some(count("limit", &v)?),
            other => return Err(bad_param(other, format!("unknown parameter {other:?}"))),
        }
    }
    Ok((f, offset, limit))
}

async fn query(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let (filter, offset, limit) = parse_filter(&raw)?;
    let entries = blocking(&s, move |p| p.query(&filter)).await?;
    let page: Vec<_> = entries.into_iter().skip(offset).take(limit.unwrap_or(usize::MAX)).collect();
    Ok(Json(page).into_response())
}

async fn export_recording(
    State(s): State<AppState>,
    Path(recording_id): Path<String>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Response> {
    let mut format = ExportFormat::Csv;
    for (k, v) in query_pairs(&raw) {
        match k.as_str() {
            "format" => format = v.parse().map_err(|e: String| bad_param("format", e))?,
            other => return Err(bad_param(other, format!("unknown parameter {other:?}"))),
        }
    }
    let (ctype, ext) = match format {
        ExportFormat::Csv => ("text/csv; charset=utf-8", "csv"),
        ExportFormat::Uds => ("application/octet-stream", "uds"),
    };
    let disposition = format!("attachment; filename=\"{recording_id}.{ext}\"");
    let bytes = blocking(&s, move |p| p.export_recording(&recording_id, format)).await?;
    let mut r = bytes.into_response();
    r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(ctype));
    if let Ok(v) = HeaderValue::from_str(&disposition) {
        r.headers_mut().insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(r)
}

// ---- models

async fn train(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: TrainRequest = json_body(&body)?;
    let job = blocking(&s, move |p| p.start_training(req)).await?;
    let platform = s.platform.clone();
    let model_id = job.model_id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = platform.run_training(&model_id) {
            log::error!("training {model_id}: {e}");
        }
    });
    Ok(accepted(format!("/models/{}", job.model_id), job))
}

async fn list_models(State(s): State<AppState>) -> Response {
    Json(s.platform.models()).into_response()
}

async fn get_model(State(s): State<AppState>, Path(model_id): Path<String>) -> ApiResult<Response> {
    match s.platform.training_job(&model_id) {
        Ok(job) => Ok(Json(job).into_response()),
        Err(PlatformError::UnknownModel(_)) => {
            let bytes = s.platform.model_file(&model_id)?;
            Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
        }
        Err(e) => Err(e.into()),
    }
}

async fn download_model(State(s): State<AppState>, Path(model_id): Path<String>) -> ApiResult<Response> {
    let bytes = s.platform.model_file(&model_id)?;
    let mut r = ([(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"{model_id}.json\"")) {
        r.headers_mut().insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(r)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    model_id: String,
    rate_hz: f64,
    samples: Vec<Sample>,
    #[serde(default)]
    windowing: WindowingSpec,
}

async fn classify(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<Vec<WindowClassification>>> {
    let req: ClassifyRequest = json_body(&body)?;
    let out = blocking(&s, move |p| p.classify(&req.model_id, &req.samples, req.rate_hz, &req.windowing)).await?;
    Ok(Json(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(q: &str) -> Option<String> {
        Some(q.to_string())
    }

    #[test]
    fn repeated_and_comma_lists_agree() {
        let (a, _, _) = parse_filter(&raw("label=running&label=walking&dataset=d1")).unwrap();
        let (b, _, _) = parse_filter(&raw("label=running,walking&dataset_id=d1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.unwrap().len(), 2);
    }

    #[test]
    fn paging_and_flags() {
        let (f, offset, limit) = parse_filter(&raw("all&include_unlabeled=false&offset=3&limit=2")).unwrap();
        assert!(f.select_all && !f.include_unlabeled);
        assert_eq!((offset, limit), (3, Some(2)));
    }

    #[test]
    fn bad_parameters() {
        for q in ["limit=-1", "min_duration_s=abc", "sensor_kind=magnetometer", "colour=red", "all=maybe"] {
            let e = parse_filter(&raw(q)).unwrap_err();
            assert_eq!(e.code, "invalid_parameter", "{q}");
        }
    }

    #[test]
    fn decision_body_shapes() {
        let r: DecisionRequest = serde_json::from_str(r#"{"action":"accept","canonical":"walking"}"#).unwrap();
        assert_eq!(r.decision, Decision::Accept { canonical: "walking".into() });
        let r: PredecideRequest =
            serde_json::from_str(r#"{"dataset_id":"d","raw_label":"NUL","action":"reject","decided_by":"ana"}"#).unwrap();
        assert_eq!(r.decision.decision, Decision::Reject);
        assert_eq!(r.decision.decided_by.as_deref(), Some("ana"));
    }
}
