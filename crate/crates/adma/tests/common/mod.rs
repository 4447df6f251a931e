#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use adma::{Config, Service};
use adma_core::SequentialEnv;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const ADMIN: &str = "admin-secret";
pub const EPOCH: u64 = 1_625_097_600;

pub fn tools_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tools")
}

pub fn config(root: &Path) -> Config {
    let mut cfg = Config::new(root);
    cfg.admin_key = Some(ADMIN.into());
    cfg.workers = 2;
    for p in &mut cfg.profiles {
        p.timeout_secs = 20.0;
    }
    cfg
}

/// Percent-encodes a query value.
pub fn enc(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~/".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// An in-process service and router over a data root.
pub struct Harness {
    pub root: PathBuf,
    pub rt: tokio::runtime::Runtime,
    pub svc: Arc<Service>,
    pub app: Router,
}

impl Harness {
    pub fn open(root: &Path, cfg: Config, env: SequentialEnv) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        let svc = Arc::new(Service::open_with_env(cfg, Box::new(env)).expect("service opens"));
        let app = adma::api::router(Arc::clone(&svc));
        Harness { root: root.into(), rt, svc, app }
    }

    pub fn at(root: &Path) -> Self {
        Self::open(root, config(root), SequentialEnv::new(EPOCH))
    }

    /// Reopens after a restart without reissuing ids.
    pub fn reopen(root: &Path, generation: u64) -> Self {
        Self::open(root, config(root), SequentialEnv::new(EPOCH + generation * 1_000_000).skip(generation * 1_000_000))
    }

    pub fn call(&self, method: &str, uri: &str, key: Option<&str>, body: &[u8]) -> (StatusCode, Vec<u8>) {
        let uri = match key {
            Some(k) if uri.contains('?') => format!("{uri}&key={k}"),
            Some(k) => format!("{uri}?key={k}"),
            None => uri.to_string(),
        };
        let req = Request::builder().method(method).uri(uri).body(Body::from(body.to_vec())).unwrap();
        self.rt.block_on(async {
            let resp = self.app.clone().oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
            (status, bytes)
        })
    }

    pub fn get(&self, uri: &str, key: &str) -> (StatusCode, Value) {
        let (s, b) = self.call("GET", uri, Some(key), b"");
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    pub fn post(&self, uri: &str, key: &str, body: &[u8]) -> (StatusCode, Value) {
        let (s, b) = self.call("POST", uri, Some(key), body);
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    /// Expects success and returns the JSON body.
    pub fn ok_get(&self, uri: &str, key: &str) -> Value {
        let (s, v) = self.get(uri, key);
        assert_eq!(s, StatusCode::OK, "GET {uri}: {v}");
        v
    }

    pub fn ok_post(&self, uri: &str, key: &str, body: &[u8]) -> Value {
        let (s, v) = self.post(uri, key, body);
        assert_eq!(s, StatusCode::OK, "POST {uri}: {v}");
        v
    }

    pub fn user(&self, name: &str) -> String {
        let v = self.ok_post(&format!("/api_create_user?username={name}"), ADMIN, b"");
        v["api_key"].as_str().unwrap().to_string()
    }

    pub fn upload(&self, key: &str, path: &str, mode: &str, bytes: &[u8]) -> Value {
        self.ok_post(&format!("/api_upload?path={}&mode={mode}", enc(path)), key, bytes)
    }

    pub fn mkdir(&self, key: &str, path: &str) -> Value {
        self.ok_post(&format!("/api_mkdir?path={}", enc(path)), key, b"")
    }

    /// Polls until the run is terminal.
    pub fn wait_run(&self, key: &str, run_id: &str, limit: Duration) -> Value {
        let start = Instant::now();
        loop {
            let v = self.ok_get(&format!("/api_run_status?run_id={run_id}"), key);
            if matches!(v["status"].as_str(), Some("succeeded" | "failed" | "cancelled")) {
                return v;
            }
            assert!(start.elapsed() < limit, "run {run_id} still {} after {limit:?}", v["status"]);
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

pub const SHP: &str = "/username/ag_data/green/21_E1801_AI03_index_green.shp";

/// The world behind the golden files.
pub fn golden_world(h: &Harness) -> String {
    let key = h.user("username");
    h.mkdir(&key, "/username/ag_data/green");
    h.mkdir(&key, "/username/ag_data/green/tiles");
    let meta = enc(
        r#"{"category":"vegetation index","labels":["green","2021"],"description":"green band index, field E1801 plot AI03","geo":{"type":"point","lat":40.0628,"lon":-88.1986},"time_range":[1625097600,1625184000]}"#,
    );
    h.ok_post(&format!("/api_upload?path={SHP}&mode=data&meta={meta}"), &key, b"shapefile bytes");
    h.upload(&key, "/username/ag_data/green/21_E1801_AI03_rgba_green.png", "data", b"\x89PNG fake");
    key
}

pub fn golden(name: &str, actual: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
    assert_eq!(String::from_utf8_lossy(actual), String::from_utf8_lossy(&expected), "golden {name} differs");
}
