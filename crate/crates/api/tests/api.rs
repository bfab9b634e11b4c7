use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use har_api::{router, ApiError, AppState};
use har_core::platform::{Platform, PlatformConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Harness {
    _dir: tempfile::TempDir,
    root: PathBuf,
    app: Router,
}

fn harness(token: Option<&str>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let platform = Platform::open(PlatformConfig {
        root: root.clone(),
        dictionary: None,
    })
    .unwrap();
    let app = router(AppState::new(Arc::new(platform), token.map(str::to_string)));
    Harness { _dir: dir, root, app }
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {:?}", String::from_utf8_lossy(&self.bytes)))
    }

    /// Every non-2xx body must be an ApiError whose status matches.
    fn error(&self) -> ApiError {
        let e: ApiError = serde_json::from_slice(&self.bytes).expect("error body parses as ApiError");
        assert_eq!(e.status, self.status.as_u16());
        e
    }
}

impl Harness {
    async fn send(&self, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>, auth: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        if let Some(t) = auth {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let resp = self.app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        let reply = Reply {
            status,
            content_type,
            bytes,
        };
        if !status.is_success() {
            reply.error();
        }
        reply
    }

    async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None, Vec::new(), None).await
    }

    async fn post(&self, uri: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some("application/json"), serde_json::to_vec(&body).unwrap(), None)
            .await
    }

    async fn add_driver(&self, name: &str) -> Reply {
        let text = fs::read(fixtures().join(format!("drivers/{name}.toml"))).unwrap();
        self.send(Method::POST, "/drivers", Some("application/toml"), text, None).await
    }

    async fn poll(&self, uri: &str, done: &[&str]) -> Value {
        for _ in 0..600 {
            let v = self.get(uri).await.json();
            if done.contains(&v["state"].as_str().unwrap()) {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        panic!("{uri} never settled");
    }

    /// Registers, imports and fully reviews one fixture dataset.
    async fn import_reviewed(&self, name: &str) -> Value {
        assert_eq!(self.add_driver(name).await.status, StatusCode::CREATED);
        let root = fixtures().join("datasets").join(name);
        let r = self
            .post("/imports", json!({"driver_id": name, "dataset_id": name, "root": root}))
            .await;
        assert_eq!(r.status, StatusCode::ACCEPTED);
        let job_id = r.json()["job_id"].as_str().unwrap().to_string();
        let job = self.poll(&format!("/imports/{job_id}"), &["awaiting_labels", "complete", "failed"]).await;
        assert_eq!(job["state"], "awaiting_labels", "{job}");

        let table: toml::Table = fs::read_to_string(fixtures().join("review_decisions.toml")).unwrap().parse().unwrap();
        let answers = table[name].as_table().unwrap();
        let pending = self.get(&format!("/labels/mappings?dataset_id={name}&status=pending")).await.json();
        for m in pending.as_array().unwrap() {
            let body = match answers[m["raw_label"].as_str().unwrap()].as_str().unwrap() {
                "reject" => json!({"action": "reject"}),
                c => json!({"action": "accept", "canonical": c}),
            };
            let r = self.post(&format!("/labels/mappings/{}/decision", m["mapping_id"].as_str().unwrap()), body).await;
            assert_eq!(r.status, StatusCode::OK);
        }
        let r = self.post("/labels/apply", json!({"dataset_id": name})).await;
        assert_eq!(r.status, StatusCode::OK, "{:?}", r.json());
        self.get(&format!("/imports/{job_id}")).await.json()
    }
}

/// Files whose activity component names running, counted straight from
/// the fixture tree.
fn uci_running_files() -> usize {
    let mut n = 0;
    for split in ["train", "test"] {
        for e in fs::read_dir(fixtures().join("datasets/uci_like").join(split)).unwrap() {
            let name = e.unwrap().file_name().into_string().unwrap();
            if name.trim_end_matches(".txt").rsplit('_').next() == Some("RUNNING") {
                n += 1;
            }
        }
    }
    n
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let h = harness(None);
    let r = h.get("/health").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["status"], "ok");
    let r = h.get("/no/such/thing").await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::NOT_FOUND, "not_found"));
    let r = h.send(Method::DELETE, "/drivers", None, Vec::new(), None).await;
    assert_eq!(r.error().code, "method_not_allowed");
}

#[tokio::test]
async fn bearer_token_gates_everything_but_health() {
    let h = harness(Some("s3cret"));
    assert_eq!(h.get("/health").await.status, StatusCode::OK);
    let r = h.get("/drivers").await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::UNAUTHORIZED, "unauthorized"));
    let r = h.send(Method::GET, "/drivers", None, Vec::new(), Some("wrong")).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    let r = h.send(Method::GET, "/drivers", None, Vec::new(), Some("s3cret")).await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn driver_registration() {
    let h = harness(None);
    let r = h.add_driver("uci_like").await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json()["driver_id"], "uci_like");
    let r = h.add_driver("uci_like").await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "driver_exists"));

    let bad = b"driver_id = \"x\"\nlayout = \"{subject}.csv\"\nunit = \"furlongs\"\nrate = \"fixed:50\"\n".to_vec();
    let r = h.send(Method::POST, "/drivers", Some("application/toml"), bad, None).await;
    let e = r.error();
    assert_eq!((r.status, e.code.as_str()), (StatusCode::BAD_REQUEST, "manifest_schema"));
    assert!(e.detail.unwrap()["field"].is_string());

    let r = h
        .send(Method::POST, "/drivers", Some("application/toml"), b"driver_id = ".to_vec(), None)
        .await;
    assert_eq!(r.error().code, "manifest_syntax");

    let text = fs::read(fixtures().join("drivers/counts_like.toml")).unwrap();
    let r = h.send(Method::POST, "/drivers", Some("text/plain"), text.clone(), None).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media_type"));
    let r = h.send(Method::POST, "/drivers", None, text, None).await;
    assert_eq!(r.status, StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let list = h.get("/drivers").await.json();
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn malformed_bodies_are_invalid_json() {
    let h = harness(None);
    for uri in ["/imports", "/labels/apply", "/models/train", "/classify", "/labels/dictionary"] {
        let r = h
            .send(Method::POST, uri, Some("application/json"), b"{not json".to_vec(), None)
            .await;
        assert_eq!((r.status, r.error().code.as_str()), (StatusCode::BAD_REQUEST, "invalid_json"), "{uri}");
    }
    let r = h.post("/imports", json!({"driver_id": "x"})).await;
    assert_eq!(r.error().code, "invalid_json");
}

#[tokio::test]
async fn import_errors() {
    let h = harness(None);
    let r = h.post("/imports", json!({"driver_id": "ghost", "dataset_id": "d", "root": "/tmp"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::NOT_FOUND, "driver_not_found"));
    assert_eq!(h.get("/imports/nope").await.error().code, "job_not_found");
    h.add_driver("uci_like").await;
    let r = h
        .post("/imports", json!({"driver_id": "uci_like", "dataset_id": "../evil", "root": "/tmp"}))
        .await;
    assert_eq!(r.error().code, "invalid_request");
    let r = h.post("/labels/apply", json!({"dataset_id": "never"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "nothing_staged"));
}

#[tokio::test]
async fn dictionary_endpoints() {
    let h = harness(None);
    let dict = h.get("/labels/dictionary").await.json();
    assert!(dict["walking"].is_object());
    assert!(dict.get("skating").is_none());
    let r = h
        .post("/labels/dictionary", json!({"name": "Skating", "kind": "state", "aliases": ["skate"]}))
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let dict = h.get("/labels/dictionary").await.json();
    assert_eq!(dict["skating"]["aliases"], json!(["skate"]));
    let r = h.post("/labels/dictionary", json!({"name": "skating", "kind": "state"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "label_exists"));
    let r = h.post("/labels/dictionary", json!({"name": "sk8", "kind": "state", "aliases": ["walk"]})).await;
    assert_eq!(r.error().code, "alias_conflict");
}

#[tokio::test]
async fn review_flow_and_decision_idempotence() {
    let h = harness(None);
    h.add_driver("uci_like").await;
    let root = fixtures().join("datasets/uci_like");
    let job = h
        .post("/imports", json!({"driver_id": "uci_like", "dataset_id": "uci", "root": root}))
        .await
        .json();
    let job = h
        .poll(&format!("/imports/{}", job["job_id"].as_str().unwrap()), &["awaiting_labels", "failed"])
        .await;
    assert_eq!(job["state"], "awaiting_labels");
    assert_eq!(job["counts"]["discovered"], 7);

    let r = h.post("/labels/apply", json!({"dataset_id": "uci"})).await;
    let e = r.error();
    assert_eq!((r.status, e.code.as_str()), (StatusCode::CONFLICT, "pending_mappings_remain"));
    assert_eq!(e.detail.unwrap()["raw_labels"].as_array().unwrap().len(), 6);

    let pending = h.get("/labels/mappings?dataset_id=uci&status=pending").await.json();
    let laying = pending
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["raw_label"] == "laying")
        .unwrap()
        .clone();
    assert_eq!(laying["suggestions"][0]["canonical"], "lying");
    assert_eq!(laying["suggestions"][0]["score"], 1.0);
    let uri = format!("/labels/mappings/{}/decision", laying["mapping_id"].as_str().unwrap());

    let r = h.post(&uri, json!({"action": "accept", "canonical": "dancing"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::BAD_REQUEST, "unknown_canonical"));
    let first = h.post(&uri, json!({"action": "accept", "canonical": "lying"})).await;
    assert_eq!(first.status, StatusCode::OK);
    let again = h.post(&uri, json!({"action": "accept", "canonical": "lying"})).await;
    assert_eq!(again.status, StatusCode::OK);
    assert_eq!(again.json(), first.json());
    let r = h.post(&uri, json!({"action": "reject"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "already_decided"));
    let r = h.post("/labels/mappings/missing/decision", json!({"action": "reject"})).await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::NOT_FOUND, "mapping_not_found"));
    assert_eq!(h.get("/labels/mappings?status=bogus").await.error().code, "invalid_request");
    assert_eq!(h.get("/labels/mappings?dataset_id=uci&status=pending").await.json().as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn predecided_dataset_finalizes_without_review() {
    let h = harness(None);
    let table: toml::Table = fs::read_to_string(fixtures().join("review_decisions.toml")).unwrap().parse().unwrap();
    for (raw, canonical) in table["counts_like"].as_table().unwrap() {
        let r = h
            .post(
                "/labels/mappings",
                json!({"dataset_id": "counts", "raw_label": raw, "action": "accept", "canonical": canonical.as_str().unwrap()}),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED);
    }
    h.add_driver("counts_like").await;
    let root = fixtures().join("datasets/counts_like");
    let job = h
        .post("/imports", json!({"driver_id": "counts_like", "dataset_id": "counts", "root": root}))
        .await
        .json();
    let job = h
        .poll(&format!("/imports/{}", job["job_id"].as_str().unwrap()), &["complete", "failed", "awaiting_labels"])
        .await;
    assert_eq!(job["state"], "complete", "{job}");
    let r = h
        .post("/imports", json!({"driver_id": "counts_like", "dataset_id": "counts", "root": root}))
        .await;
    assert_eq!((r.status, r.error().code.as_str()), (StatusCode::CONFLICT, "dataset_exists"));
}

#[tokio::test]
async fn query_export_train_classify() {
    let h = harness(None);
    let job = h.import_reviewed("uci_like").await;
    assert_eq!(job["state"], "complete");

    let r = h.get("/data/query?label=running").await;
    assert_eq!(r.status, StatusCode::OK);
    let running = r.json();
    assert_eq!(running.as_array().unwrap().len(), uci_running_files());
    let same = h.get("/data/query?label=RUNNING&dataset=uci_like").await.json();
    assert_eq!(same, running);

    assert_eq!(h.get("/data/query").await.error().code, "unconstrained_query");
    assert_eq!(h.get("/data/query?label=moonwalk").await.error().code, "unknown_label");
    assert_eq!(h.get("/data/query?limit=x&all").await.error().code, "invalid_parameter");
    let all = h.get("/data/query?all").await.json();
    assert_eq!(all.as_array().unwrap().len(), 7);
    let page = h.get("/data/query?all&offset=2&limit=3").await.json();
    assert_eq!(page.as_array().unwrap()[..], all.as_array().unwrap()[2..5]);

    let id = running[0]["recording_id"].as_str().unwrap();
    let n = running[0]["n_samples"].as_u64().unwrap() as usize;
    let csv = h.get(&format!("/data/recordings/{id}?format=csv")).await;
    assert_eq!(csv.status, StatusCode::OK);
    assert!(csv.content_type.unwrap().starts_with("text/csv"));
    let text = String::from_utf8(csv.bytes).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,y,z,label"));
    assert_eq!(text.lines().count(), n + 1);
    let uds = h.get(&format!("/data/recordings/{id}?format=uds")).await;
    assert_eq!(uds.content_type.as_deref(), Some("application/octet-stream"));
    assert_eq!(uds.bytes.len(), 27 + 24 * n + 4);
    assert_eq!(h.get(&format!("/data/recordings/{id}?format=xml")).await.error().code, "invalid_parameter");
    assert_eq!(h.get("/data/recordings/nope").await.error().code, "recording_not_found");

    let r = h.post("/models/train", json!({"filter": {"dataset_ids": ["uci_like"]}, "kind": {"type": "knn", "k": 3}})).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let model_id = r.json()["model_id"].as_str().unwrap().to_string();
    let done = h.poll(&format!("/models/{model_id}"), &["complete", "failed"]).await;
    assert_eq!(done["state"], "complete", "{done}");
    let report = &done["report"];
    assert!(report["accuracy"].as_f64().unwrap() > 0.0);

    let listed = h.get("/models").await.json();
    assert_eq!(listed[0]["model_id"], model_id.as_str());
    assert_eq!(listed[0]["state"], "complete");
    let file = h.get(&format!("/models/{model_id}/download")).await;
    assert_eq!(file.status, StatusCode::OK);
    let model = file.json();
    assert_eq!((model["format"].as_str(), model["version"].as_u64()), (Some("har-model"), Some(1)));
    assert_eq!(h.get("/models/ghost/download").await.error().code, "unknown_model");

    let samples: Vec<[f64; 3]> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).take(3).map(|v| v.parse().unwrap()).collect();
            [f[0], f[1], f[2]]
        })
        .collect();
    let r = h.post("/classify", json!({"model_id": model_id, "rate_hz": 50.0, "samples": samples})).await;
    assert_eq!(r.status, StatusCode::OK);
    let out = r.json();
    let windows = out.as_array().unwrap();
    // 2 s windows with a 1 s stride
    assert_eq!(windows.len(), (n - 100) / 50 + 1);
    for w in windows {
        let c = w["confidence"].as_f64().unwrap();
        assert!(c > 0.0 && c <= 1.0);
    }

    let r = h
        .post("/classify", json!({"model_id": model_id, "rate_hz": 50.0, "samples": &samples[..40]}))
        .await;
    let e = r.error();
    assert_eq!((r.status, e.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "too_short"));
    assert_eq!(e.detail.unwrap()["needed"], 100);
    let r = h.post("/classify", json!({"model_id": "ghost", "rate_hz": 50.0, "samples": samples})).await;
    assert_eq!(r.error().code, "unknown_model");

    let r = h.post("/models/train", json!({"filter": {"labels": ["moonwalk"]}})).await;
    assert_eq!(r.error().code, "unknown_label");
    let r = h.post("/models/train", json!({"filter": {"labels": ["jumping"]}})).await;
    let failed_id = r.json()["model_id"].as_str().unwrap().to_string();
    let failed = h.poll(&format!("/models/{failed_id}"), &["complete", "failed"]).await;
    assert_eq!(failed["state"], "failed");
    assert_eq!(h.get(&format!("/models/{failed_id}/download")).await.error().code, "model_failed");
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "LOCK" {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[tokio::test]
async fn reads_have_no_side_effects() {
    let h = harness(None);
    h.import_reviewed("uci_like").await;
    let r = h.post("/models/train", json!({"filter": {"select_all": true}})).await;
    let model_id = r.json()["model_id"].as_str().unwrap().to_string();
    h.poll(&format!("/models/{model_id}"), &["complete"]).await;
    let id = h.get("/data/query?all").await.json()[0]["recording_id"].as_str().unwrap().to_string();

    let before = snapshot(&h.root);
    let uris = [
        "/health".to_string(),
        "/drivers".into(),
        "/imports".into(),
        "/labels/dictionary".into(),
        "/labels/mappings".into(),
        "/labels/mappings?dataset_id=uci_like&status=accepted".into(),
        "/data/query?label=running".into(),
        format!("/data/recordings/{id}?format=csv"),
        format!("/data/recordings/{id}?format=uds"),
        "/models".into(),
        format!("/models/{model_id}"),
        format!("/models/{model_id}/download"),
    ];
    for uri in &uris {
        let a = h.get(uri).await;
        let b = h.get(uri).await;
        assert_eq!(a.status, StatusCode::OK, "{uri}");
        assert_eq!(a.bytes, b.bytes, "{uri}");
    }
    assert!(before == snapshot(&h.root), "a GET changed the store");
}
