//! HTTP routes. Every response body is canonical JSON except downloads;
//! failures carry `{"error":{"code":..,"message":..}}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use adma_core::{canonical, ArgSpec, EntityId, ErrorCode, LogicalPath, MetaPatch, Mode, Privilege, QueryFilter};
use adma_core::{BBox, TimeRange};
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, MethodRouter};
use axum::Router;
use serde::Serialize;

use crate::service::{Focus, Service, ServiceError};

/// Default number of search hits.
pub const DEFAULT_K: usize = 10;
/// Default pipeline traversal depth.
pub const DEFAULT_DEPTH: usize = 16;
/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 512 << 20;

/// One HTTP endpoint and the CLI command that reaches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub method: &'static str,
    pub path: &'static str,
    pub cli: &'static str,
}

const fn route(method: &'static str, path: &'static str, cli: &'static str) -> Route {
    Route { method, path, cli }
}

pub const ROUTES: &[Route] = &[
    route("POST", "/api_create_user", "user add"),
    route("GET", "/api_meta_data", "meta get"),
    route("POST", "/api_update_meta", "meta set"),
    route("GET", "/api_list_sub_items", "ls"),
    route("GET", "/api_search", "search"),
    route("POST", "/api_upload", "up"),
    route("POST", "/api_mkdir", "mkdir"),
    route("POST", "/api_delete", "rm"),
    route("POST", "/api_move", "mv"),
    route("POST", "/api_copy", "cp"),
    route("GET", "/api_download", "cat"),
    route("POST", "/api_visibility", "publish"),
    route("POST", "/api_visibility", "unpublish"),
    route("POST", "/api_collection", "coll create"),
    route("POST", "/api_collection", "coll add"),
    route("POST", "/api_collection", "coll rm"),
    route("GET", "/api_argspec", "argspec get"),
    route("POST", "/api_argspec", "argspec set"),
    route("POST", "/api_run", "run"),
    route("GET", "/api_run_status", "status"),
    route("GET", "/api_runs", "runs"),
    route("POST", "/api_cancel_run", "cancel"),
    route("GET", "/api_pipeline", "pipeline"),
];

type AppState = Arc<Service>;
type Params = BTreeMap<String, String>;
type ParamsIn = std::result::Result<Query<Params>, QueryRejection>;
type Result<T> = std::result::Result<T, ServiceError>;

/// Handlers for one path; every path in [`ROUTES`] has one.
fn handlers(path: &str) -> MethodRouter<AppState> {
    match path {
        "/api_create_user" => post(create_user),
        "/api_meta_data" => get(meta_data),
        "/api_update_meta" => post(update_meta),
        "/api_list_sub_items" => get(list_sub_items),
        "/api_search" => get(search),
        "/api_upload" => post(upload),
        "/api_mkdir" => post(mkdir),
        "/api_delete" => post(delete),
        "/api_move" => post(move_entity),
        "/api_copy" => post(copy_entity),
        "/api_download" => get(download),
        "/api_visibility" => post(visibility),
        "/api_collection" => post(collection),
        "/api_argspec" => get(get_argspec).post(set_argspec),
        "/api_run" => post(run),
        "/api_run_status" => get(run_status),
        "/api_runs" => get(runs),
        "/api_cancel_run" => post(cancel_run),
        "/api_pipeline" => get(pipeline),
        other => unreachable!("no handlers for {other}"),
    }
}

/// The API router, built from [`ROUTES`] so the table is exhaustive.
pub fn router(service: Arc<Service>) -> Router {
    let mut paths: Vec<&str> = ROUTES.iter().map(|r| r.path).collect();
    paths.sort_unstable();
    paths.dedup();
    paths
        .into_iter()
        .fold(Router::new(), |r, p| r.route(p, handlers(p)))
        .fallback(|| async { error_response(&ServiceError::new(ErrorCode::NotFound, "no such endpoint")) })
        .method_not_allowed_fallback(|| async {
            let mut r = error_response(&ServiceError::bad_request("method not allowed"));
            *r.status_mut() = StatusCode::METHOD_NOT_ALLOWED;
            r
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(service)
}

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
        ErrorCode::Conflict => StatusCode::CONFLICT,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    error: EnvelopeBody<'a>,
}

#[derive(Serialize)]
struct EnvelopeBody<'a> {
    code: &'a str,
    message: &'a str,
}

fn json_response(status: StatusCode, body: String) -> Response {
    let mut r = (status, body).into_response();
    r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

pub fn error_response(e: &ServiceError) -> Response {
    let body = Envelope { error: EnvelopeBody { code: e.code.as_str(), message: &e.message } };
    json_response(status_of(e.code), canonical::to_string(&body).expect("envelope serializes"))
}

fn respond<T: Serialize>(result: Result<T>) -> Response {
    match result.and_then(|v| {
        canonical::to_string(&v).map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))
    }) {
        Ok(body) => json_response(StatusCode::OK, body),
        Err(e) => error_response(&e),
    }
}

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::new(ErrorCode::Internal, format!("handler panicked: {e}"))))
}

fn key_of<'a>(headers: &'a HeaderMap, params: &'a Params) -> Option<&'a str> {
    params.get("key").map(String::as_str).or_else(|| headers.get("x-api-key").and_then(|v| v.to_str().ok()))
}

/// Authenticates before looking at any other parameter.
async fn authed<T: Serialize + Send + 'static>(
    svc: AppState,
    headers: &HeaderMap,
    params: ParamsIn,
    f: impl FnOnce(&Service, &str, &Params) -> Result<T> + Send + 'static,
) -> Response {
    respond(authed_raw(svc, headers, params, f).await)
}

async fn authed_raw<T: Send + 'static>(
    svc: AppState,
    headers: &HeaderMap,
    params: ParamsIn,
    f: impl FnOnce(&Service, &str, &Params) -> Result<T> + Send + 'static,
) -> Result<T> {
    let params = params.map(|Query(p)| p);
    let key = match &params {
        Ok(p) => key_of(headers, p),
        Err(_) => headers.get("x-api-key").and_then(|v| v.to_str().ok()),
    }
    .map(str::to_string);
    blocking(move || {
        let user = svc.authenticate(key.as_deref().ok_or_else(ServiceError::unauthorized)?)?;
        let params = params.map_err(|e| ServiceError::bad_request(e.body_text()))?;
        f(&svc, &user, &params)
    })
    .await
}

fn param<'a>(p: &'a Params, name: &str) -> Result<&'a str> {
    p.get(name).map(String::as_str).ok_or_else(|| ServiceError::bad_request(format!("missing parameter {name}")))
}

fn path_param(p: &Params, name: &str) -> Result<LogicalPath> {
    let raw = param(p, name)?;
    LogicalPath::parse(raw).map_err(|e| ServiceError::bad_request(format!("{name}: {e}")))
}

fn parse_num<T: std::str::FromStr>(p: &Params, name: &str) -> Result<Option<T>> {
    p.get(name)
        .map(|v| v.parse().map_err(|_| ServiceError::bad_request(format!("{name}: not a number: {v:?}"))))
        .transpose()
}

fn parse_bool(p: &Params, name: &str) -> Result<Option<bool>> {
    p.get(name)
        .map(|v| match v.as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(ServiceError::bad_request(format!("{name}: expected true or false"))),
        })
        .transpose()
}

fn mode_param(p: &Params, name: &str) -> Result<Option<Mode>> {
    p.get(name).map(|v| Mode::parse(v).ok_or_else(|| ServiceError::bad_request(format!("unknown mode {v:?}")))).transpose()
}

fn json_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::bad_request(format!("invalid JSON body: {e}")))
}

fn optional_patch(body: &[u8]) -> Result<MetaPatch> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(MetaPatch::default());
    }
    let value: serde_json::Value = json_body(body)?;
    MetaPatch::from_json(&value).map_err(|e| ServiceError::bad_request(e.to_string()))
}

/// Conjunctive filter from query parameters. `labels` is comma-separated;
/// `bbox` is `min_lat,min_lon,max_lat,max_lon`.
pub fn filter_from_params(p: &Params) -> Result<QueryFilter> {
    let privilege = p
        .get("privilege")
        .map(|v| Privilege::parse(v).ok_or_else(|| ServiceError::bad_request(format!("unknown privilege {v:?}"))))
        .transpose()?;
    let labels = p.get("labels").map(|v| v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
    let time_range = match (parse_num::<i64>(p, "from")?, parse_num::<i64>(p, "to")?) {
        (None, None) => None,
        (from, to) => Some(
            TimeRange::new(from.unwrap_or(i64::MIN), to.unwrap_or(i64::MAX))
                .map_err(|e| ServiceError::bad_request(e.to_string()))?,
        ),
    };
    let spatial_bbox = p
        .get("bbox")
        .map(|v| {
            let parts: Vec<f64> = v.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>().map_err(
                |_| ServiceError::bad_request("bbox: expected min_lat,min_lon,max_lat,max_lon"),
            )?;
            match parts[..] {
                [min_lat, min_lon, max_lat, max_lon] => {
                    let b = BBox { min_lat, min_lon, max_lat, max_lon };
                    b.validate().map(|_| b).map_err(|e| ServiceError::bad_request(e.to_string()))
                }
                _ => Err(ServiceError::bad_request("bbox: expected four numbers")),
            }
        })
        .transpose()?;
    let filter = QueryFilter {
        mode: mode_param(p, "mode")?,
        format: p.get("format").cloned(),
        category: p.get("category").cloned(),
        labels,
        privilege,
        realtime: parse_bool(p, "realtime")?,
        time_range,
        spatial_bbox,
    };
    filter.validate().map_err(|e| ServiceError::bad_request(e.to_string()))?;
    Ok(filter)
}

async fn create_user(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    let params = params.map(|Query(p)| p);
    let key = match &params {
        Ok(p) => key_of(&headers, p),
        Err(_) => headers.get("x-api-key").and_then(|v| v.to_str().ok()),
    }
    .map(str::to_string);
    respond(
        blocking(move || {
            svc.check_admin(key.as_deref().unwrap_or(""))?;
            let params = params.map_err(|e| ServiceError::bad_request(e.body_text()))?;
            svc.create_user(param(&params, "username")?)
        })
        .await,
    )
}

async fn meta_data(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.get_metadata(u, &path_param(p, "path")?)).await
}

async fn update_meta(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn, body: Bytes) -> Response {
    authed(svc, &headers, params, move |s, u, p| {
        let path = path_param(p, "path")?;
        let patch: serde_json::Value = json_body(&body)?;
        s.update_metadata(u, &path, &patch)
    })
    .await
}

async fn list_sub_items(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.list_children(u, &path_param(p, "path")?)).await
}

/// Returns the ranked hits as an array; with `projection=true` returns
/// `{"hits":[..],"projection":[..]}` carrying 2-D coordinates of the hits.
async fn search(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    let result = authed_raw(svc, &headers, params, |s, u, p| {
        let q = p.get("q").map(String::as_str).unwrap_or("");
        let k = parse_num::<usize>(p, "k")?.unwrap_or(DEFAULT_K);
        let filter = filter_from_params(p)?;
        let project = parse_bool(p, "projection")?.unwrap_or(false);
        let result = s.search(u, q, &filter, k, project)?;
        let value = if project { serde_json::to_value(&result) } else { serde_json::to_value(&result.hits) };
        value.map_err(|e| ServiceError::new(ErrorCode::Internal, e.to_string()))
    })
    .await;
    respond(result)
}

async fn upload(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn, body: Bytes) -> Response {
    authed(svc, &headers, params, move |s, u, p| {
        let path = path_param(p, "path")?;
        let mode = mode_param(p, "mode")?.unwrap_or(Mode::Data);
        let patch = match p.get("meta") {
            Some(m) => optional_patch(m.as_bytes())?,
            None => MetaPatch::default(),
        };
        s.upload(u, &path, mode, &body, &patch)
    })
    .await
}

async fn mkdir(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| {
        let mode = mode_param(p, "mode")?.unwrap_or(Mode::Data);
        s.mkdir(u, &path_param(p, "path")?, mode)
    })
    .await
}

#[derive(Serialize)]
struct Removed {
    removed: Vec<EntityId>,
}

async fn delete(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| Ok(Removed { removed: s.delete(u, &path_param(p, "path")?)? })).await
}

async fn move_entity(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.move_entity(u, &path_param(p, "src")?, &path_param(p, "dst")?)).await
}

async fn copy_entity(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.copy_entity(u, &path_param(p, "src")?, &path_param(p, "dst")?)).await
}

async fn download(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    match authed_raw(svc, &headers, params, |s, u, p| s.download(u, &path_param(p, "path")?)).await {
        Ok(bytes) => {
            let mut r = (StatusCode::OK, bytes).into_response();
            r.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
            r
        }
        Err(e) => error_response(&e),
    }
}

async fn visibility(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| {
        let raw = param(p, "privilege")?;
        let privilege =
            Privilege::parse(raw).ok_or_else(|| ServiceError::bad_request(format!("unknown privilege {raw:?}")))?;
        s.set_visibility(u, &path_param(p, "path")?, privilege)
    })
    .await
}

/// `action=create` (optional JSON metadata body), `add` or `rm` with `member`.
async fn collection(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn, body: Bytes) -> Response {
    authed(svc, &headers, params, move |s, u, p| {
        let path = path_param(p, "path")?;
        match param(p, "action")? {
            "create" => s.create_collection(u, &path, &optional_patch(&body)?),
            "add" => s.add_member(u, &path, &path_param(p, "member")?),
            "rm" => s.remove_member(u, &path, &path_param(p, "member")?),
            other => Err(ServiceError::bad_request(format!("unknown collection action {other:?}"))),
        }
    })
    .await
}

async fn get_argspec(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.get_argspec(u, &path_param(p, "path")?)).await
}

/// Body: JSON array of argument specs. `profile` selects the executor.
async fn set_argspec(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn, body: Bytes) -> Response {
    authed(svc, &headers, params, move |s, u, p| {
        let path = path_param(p, "path")?;
        let argspec: Vec<ArgSpec> = json_body(&body)?;
        s.set_argspec(u, &path, p.get("profile").map(String::as_str), argspec)
    })
    .await
}

/// Body: JSON object of argument name to string value (may be empty).
async fn run(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn, body: Bytes) -> Response {
    authed(svc, &headers, params, move |s, u, p| {
        let path = path_param(p, "path")?;
        let bindings: BTreeMap<String, String> =
            if body.iter().all(u8::is_ascii_whitespace) { BTreeMap::new() } else { json_body(&body)? };
        s.launch_run(u, &path, &bindings)
    })
    .await
}

async fn run_status(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.get_run(u, param(p, "run_id")?)).await
}

async fn runs(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.list_runs(u, &path_param(p, "path")?)).await
}

async fn cancel_run(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| s.cancel_run(u, param(p, "run_id")?)).await
}

/// Focus by `path`, or by `id` (reaches deleted entities).
async fn pipeline(State(svc): State<AppState>, headers: HeaderMap, params: ParamsIn) -> Response {
    authed(svc, &headers, params, |s, u, p| {
        let focus = match p.get("id") {
            Some(id) => Focus::Id(id.parse().map_err(|_| ServiceError::bad_request(format!("invalid id {id:?}")))?),
            None => Focus::Path(path_param(p, "path")?),
        };
        let depth = parse_num::<usize>(p, "depth")?.unwrap_or(DEFAULT_DEPTH);
        s.pipeline(u, &focus, depth)
    })
    .await
}
