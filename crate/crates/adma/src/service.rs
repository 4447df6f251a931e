//! The service: a persisted catalog, run bookkeeping and the worker pool.
//!
//! Lock order is catalog, then runs, then the data store; no code path
//! acquires an earlier lock while holding a later one.

use std::collections::BTreeMap;
use std::io;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use adma_core::catalog::{CatalogError, ToolOutput};
use adma_core::hash::content_hash;
use adma_core::tool::{command_args, expand_template, ArgKind};
use adma_core::{
    canonical, ArgSpec, Catalog, EntityId, Environment, ErrorCode, HashingEmbedder, LogicalPath,
    MetaPatch, MetadataDoc, Mode, PipelineView, Privilege, ProjectionPoint, QueryFilter, RunRecord, RunStatus,
    SearchHit, ToolError, ToolSpec, UserAccount,
};
use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use crate::config::Config;
use crate::executor::{self, Outcome, RunPlan};
use crate::store::{DataStore, FsContentStore, SystemEnv};

/// An error with its wire class.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ServiceError {
    pub code: ErrorCode,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ServiceError { code, message: message.into() }
    }

    pub fn unauthorized() -> Self {
        Self::new(ErrorCode::Unauthorized, "missing or invalid key")
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(ErrorCode::NotFound, format!("{what} not found"))
    }
}

impl From<CatalogError> for ServiceError {
    fn from(e: CatalogError) -> Self {
        ServiceError::new(e.code(), e.to_string())
    }
}

impl From<ToolError> for ServiceError {
    fn from(e: ToolError) -> Self {
        CatalogError::from(e).into()
    }
}

impl From<io::Error> for ServiceError {
    fn from(e: io::Error) -> Self {
        tracing::error!(error = %e, "storage failure");
        ServiceError::new(ErrorCode::Internal, format!("storage failure: {e}"))
    }
}

type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
    pub projection: Vec<ProjectionPoint>,
}

/// A pipeline view together with its Graphviz rendering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResponse {
    #[serde(flatten)]
    pub view: PipelineView,
    pub dot: String,
}

/// How a pipeline request names its focus.
#[derive(Debug, Clone)]
pub enum Focus {
    Path(LogicalPath),
    Id(EntityId),
}

struct LiveRun {
    plan: RunPlan,
    cancel: Arc<AtomicBool>,
    started: Option<Instant>,
    tool: EntityId,
    inputs: Vec<EntityId>,
    outputs: Vec<(LogicalPath, Mode)>,
    args: String,
}

#[derive(Default)]
struct RunTable {
    records: BTreeMap<String, RunRecord>,
    live: BTreeMap<String, LiveRun>,
    next: u64,
}

impl RunTable {
    /// Snapshot with running time measured up to now for active runs.
    fn snapshot(&self, id: &str) -> Option<RunRecord> {
        let mut rec = self.records.get(id)?.clone();
        if rec.status == RunStatus::Running {
            if let Some(started) = self.live.get(id).and_then(|l| l.started) {
                rec.running_time = started.elapsed().as_secs_f64();
            }
        }
        Some(rec)
    }
}

struct Inner {
    config: Config,
    catalog: RwLock<Catalog>,
    runs: Mutex<RunTable>,
    store: Mutex<DataStore>,
    stopping: AtomicBool,
}

pub struct Service {
    inner: Arc<Inner>,
    queue: Mutex<Option<Sender<String>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("data_root", &self.inner.config.data_root).finish()
    }
}

impl Service {
    /// Opens the data root with the system clock and randomness.
    pub fn open(config: Config) -> Result<Self> {
        Self::open_with_env(config, Box::new(SystemEnv))
    }

    pub fn open_with_env(config: Config, env: Box<dyn Environment>) -> Result<Self> {
        config.validate().map_err(|e| ServiceError::bad_request(e.to_string()))?;
        let (mut store, loaded) = DataStore::open(&config.data_root)?;
        let content = FsContentStore::new(store.content_dir())?;
        let mut catalog = Catalog::restore(env, Box::new(content), Box::new(HashingEmbedder), loaded.state)?;
        if !catalog.provenance().verify_dag() {
            return Err(ServiceError::new(ErrorCode::Internal, "provenance log is inconsistent"));
        }
        store.persist(&mut catalog)?;
        let mut table = RunTable::default();
        for mut run in loaded.runs {
            if !run.status.is_terminal() {
                Self::reconcile(&catalog, &mut run);
                store.put_run(&run)?;
            }
            let n = run.run_id.strip_prefix("run-").and_then(|s| s.parse::<u64>().ok()).unwrap_or(0);
            table.next = table.next.max(n);
            table.records.insert(run.run_id.clone(), run);
        }
        let inner = Arc::new(Inner {
            catalog: RwLock::new(catalog),
            runs: Mutex::new(table),
            store: Mutex::new(store),
            stopping: AtomicBool::new(false),
            config,
        });
        let (tx, rx) = mpsc::channel::<String>();
        let rx = Arc::new(std::sync::Mutex::new(rx));
        let workers = (0..inner.config.workers)
            .map(|i| {
                let inner = Arc::clone(&inner);
                let rx = Arc::clone(&rx);
                std::thread::Builder::new()
                    .name(format!("adma-worker-{i}"))
                    .spawn(move || worker(&inner, &rx))
                    .expect("spawning worker thread")
            })
            .collect();
        Ok(Service { inner, queue: Mutex::new(Some(tx)), workers: Mutex::new(workers) })
    }

    /// A run left unfinished by a previous process: succeeded if its
    /// outputs were registered (the tool_run edge carries the run id),
    /// failed otherwise.
    fn reconcile(catalog: &Catalog, run: &mut RunRecord) {
        let edge = catalog.provenance().edges().iter().find(|e| e.note.as_deref() == Some(run.run_id.as_str()));
        match edge {
            Some(e) => {
                run.status = RunStatus::Succeeded;
                run.output_ids = e.outputs.clone();
                run.edge_id = Some(e.edge_id);
            }
            None => {
                run.status = RunStatus::Failed;
                run.error = Some("service stopped before the run finished".into());
            }
        }
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    /// Applies a catalog mutation and persists whatever it changed.
    fn mutate<T>(&self, f: impl FnOnce(&mut Catalog) -> std::result::Result<T, CatalogError>) -> Result<T> {
        let mut cat = self.inner.catalog.write();
        let out = f(&mut cat);
        self.inner.store.lock().persist(&mut cat)?;
        Ok(out?)
    }

    fn read<T>(&self, f: impl FnOnce(&Catalog) -> std::result::Result<T, CatalogError>) -> Result<T> {
        Ok(f(&self.inner.catalog.read())?)
    }

    // ---- accounts ----

    pub fn authenticate(&self, key: &str) -> Result<String> {
        self.inner.catalog.read().authenticate(key).map(str::to_string).ok_or_else(ServiceError::unauthorized)
    }

    pub fn check_admin(&self, key: &str) -> Result<()> {
        match &self.inner.config.admin_key {
            Some(admin) if admin.len() == key.len() && admin.bytes().zip(key.bytes()).fold(0, |a, (x, y)| a | (x ^ y)) == 0 => Ok(()),
            _ => Err(ServiceError::unauthorized()),
        }
    }

    pub fn create_user(&self, username: &str) -> Result<UserAccount> {
        self.mutate(|c| c.create_user(username))
    }

    // ---- catalog ----

    pub fn get_metadata(&self, user: &str, path: &LogicalPath) -> Result<MetadataDoc> {
        self.read(|c| c.get_metadata(user, path))
    }

    pub fn list_children(&self, user: &str, path: &LogicalPath) -> Result<Vec<MetadataDoc>> {
        self.read(|c| c.list_children(user, path))
    }

    pub fn upload(&self, actor: &str, path: &LogicalPath, mode: Mode, bytes: &[u8], patch: &MetaPatch) -> Result<MetadataDoc> {
        self.mutate(|c| {
            let id = c.upload(actor, path, mode, bytes, patch)?;
            Ok(c.doc(id).cloned().expect("just created"))
        })
    }

    pub fn mkdir(&self, actor: &str, path: &LogicalPath, mode: Mode) -> Result<MetadataDoc> {
        self.mutate(|c| {
            let id = c.create_folder(actor, path, mode)?;
            Ok(c.doc(id).cloned().expect("just created"))
        })
    }

    pub fn update_metadata(&self, actor: &str, path: &LogicalPath, patch: &serde_json::Value) -> Result<MetadataDoc> {
        let patch = MetaPatch::from_json(patch).map_err(CatalogError::from)?;
        self.mutate(|c| c.update_metadata(actor, path, &patch))
    }

    pub fn delete(&self, actor: &str, path: &LogicalPath) -> Result<Vec<EntityId>> {
        self.mutate(|c| c.delete(actor, path))
    }

    pub fn move_entity(&self, actor: &str, src: &LogicalPath, dst: &LogicalPath) -> Result<MetadataDoc> {
        self.mutate(|c| c.move_entity(actor, src, dst))
    }

    pub fn copy_entity(&self, actor: &str, src: &LogicalPath, dst: &LogicalPath) -> Result<MetadataDoc> {
        self.mutate(|c| {
            let id = c.copy_entity(actor, src, dst)?;
            Ok(c.doc(id).cloned().expect("just created"))
        })
    }

    pub fn download(&self, user: &str, path: &LogicalPath) -> Result<Vec<u8>> {
        self.read(|c| c.read_content(user, path))
    }

    pub fn set_visibility(&self, actor: &str, path: &LogicalPath, privilege: Privilege) -> Result<Vec<LogicalPath>> {
        self.mutate(|c| c.set_visibility(actor, path, privilege))
    }

    pub fn create_collection(&self, actor: &str, path: &LogicalPath, patch: &MetaPatch) -> Result<MetadataDoc> {
        self.mutate(|c| {
            let id = c.create_collection(actor, path, patch)?;
            Ok(c.doc(id).cloned().expect("just created"))
        })
    }

    pub fn add_member(&self, actor: &str, collection: &LogicalPath, member: &LogicalPath) -> Result<MetadataDoc> {
        self.mutate(|c| c.add_member(actor, collection, member))
    }

    pub fn remove_member(&self, actor: &str, collection: &LogicalPath, member: &LogicalPath) -> Result<MetadataDoc> {
        self.mutate(|c| c.remove_member(actor, collection, member))
    }

    pub fn search(&self, user: &str, query: &str, filter: &QueryFilter, k: usize, project: bool) -> Result<SearchResult> {
        self.read(|c| {
            let hits = c.search(user, query, filter, k)?;
            let projection = if project && !hits.is_empty() {
                let ids: Vec<EntityId> = hits.iter().map(|h| h.entity_id).collect();
                c.project(user, &ids)?
            } else {
                Vec::new()
            };
            Ok(SearchResult { hits, projection })
        })
    }

    pub fn pipeline(&self, user: &str, focus: &Focus, depth: usize) -> Result<PipelineResponse> {
        self.read(|c| {
            let view = match focus {
                Focus::Path(p) => c.pipeline_of(user, p, depth)?,
                Focus::Id(id) => c.pipeline_by_id(user, *id, depth)?,
            };
            let dot = c.provenance().to_dot(&view);
            Ok(PipelineResponse { view, dot })
        })
    }

    /// Runs `f` with read access to the catalog (tests and diagnostics).
    pub fn with_catalog<T>(&self, f: impl FnOnce(&Catalog) -> T) -> T {
        f(&self.inner.catalog.read())
    }

    // ---- tools ----

    fn effective_spec(&self, c: &Catalog, user: &str, path: &LogicalPath) -> Result<ToolSpec> {
        let tool = c.runnable(user, path)?;
        if let Some(spec) = c.tool_spec(user, path)? {
            return Ok(spec.clone());
        }
        let profile = self
            .inner
            .config
            .profile_for_format(&tool.format)
            .ok_or_else(|| ServiceError::bad_request(format!("no executor profile for format {:?}", tool.format)))?;
        Ok(ToolSpec { tool_entity: tool.entity_id, executor_profile: profile.name.clone(), argspec: Vec::new() })
    }

    /// The stored spec, or the default (no arguments, profile chosen by file extension).
    pub fn get_argspec(&self, user: &str, path: &LogicalPath) -> Result<ToolSpec> {
        let c = self.inner.catalog.read();
        self.effective_spec(&c, user, path)
    }

    pub fn set_argspec(&self, actor: &str, path: &LogicalPath, profile: Option<&str>, argspec: Vec<ArgSpec>) -> Result<ToolSpec> {
        let profile = match profile {
            Some(p) => p.to_string(),
            None => self.get_argspec(actor, path)?.executor_profile,
        };
        if self.inner.config.profile(&profile).is_none() {
            return Err(ToolError::UnknownProfile(profile).into());
        }
        self.mutate(|c| c.set_tool_spec(actor, path, &profile, argspec))
    }

    /// Validates bindings, snapshots the tool and its inputs, and queues the run.
    pub fn launch_run(&self, actor: &str, tool_path: &LogicalPath, bindings: &BTreeMap<String, String>) -> Result<RunRecord> {
        let c = self.inner.catalog.read();
        let spec = self.effective_spec(&c, actor, tool_path)?;
        let tool = c.runnable(actor, tool_path)?.clone();
        let profile = self
            .inner
            .config
            .profile(&spec.executor_profile)
            .ok_or_else(|| ToolError::UnknownProfile(spec.executor_profile.clone()))?
            .clone();
        let bound = spec.bind(bindings)?;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for arg in &bound {
            match arg.spec.kind {
                ArgKind::PathIn => {
                    let path = LogicalPath::parse(&arg.value).map_err(CatalogError::from)?;
                    let doc = c.resolve(actor, &path)?;
                    if !doc.has_content() {
                        return Err(ToolError::InvalidBinding(format!("{}: {path} has no content", arg.spec.name)).into());
                    }
                    let bytes = c.store().get(doc.entity_id).map_err(CatalogError::from)?;
                    inputs.push((arg.spec.name.clone(), doc.entity_id, path.file_name().to_string(), bytes));
                }
                ArgKind::PathOut => {
                    let path = LogicalPath::parse(&arg.value).map_err(CatalogError::from)?;
                    c.check_creatable(actor, &path)?;
                    outputs.push((arg.spec.name.clone(), path, arg.spec.mode.unwrap_or(Mode::Data)));
                }
                _ => {}
            }
        }
        let tool_bytes = c.store().get(tool.entity_id).map_err(CatalogError::from)?;
        let now = c.now();
        drop(c);

        let (tool_file, in_names, out_names) = executor::file_names(
            tool.path.file_name(),
            inputs.iter().map(|i| i.2.as_str()),
            outputs.iter().map(|o| o.1.file_name()),
        );
        let mut names = BTreeMap::new();
        for (i, n) in inputs.iter().zip(&in_names) {
            names.insert(i.0.clone(), n.clone());
        }
        for (o, n) in outputs.iter().zip(&out_names) {
            names.insert(o.0.clone(), n.clone());
        }
        let argv = expand_template(&profile.command, &tool_file, &command_args(&bound, &names));
        let resolved: BTreeMap<String, String> = bound.iter().map(|b| (b.spec.name.clone(), b.value.clone())).collect();

        let mut runs = self.inner.runs.lock();
        runs.next += 1;
        let run_id = format!("run-{:06}", runs.next);
        let container = content_hash(format!("{}:{run_id}", self.inner.config.data_root.display()).as_bytes());
        let dir = self.inner.store.lock().run_dir(&run_id);
        let record = RunRecord {
            run_id: run_id.clone(),
            tool_id: tool.entity_id,
            tool_path: tool.path.clone(),
            container_id: format!("sbx-{}", &container[..12]),
            image: profile.name.clone(),
            status: RunStatus::Queued,
            queued_at: now,
            started_at: None,
            running_time: 0.0,
            actor: actor.into(),
            bindings: resolved.clone(),
            output_ids: Vec::new(),
            edge_id: None,
            exit_code: None,
            error: None,
            log_excerpt: String::new(),
        };
        let plan = RunPlan {
            dir,
            tool: (tool_file, tool_bytes),
            inputs: inputs.iter().zip(in_names).map(|(i, n)| (n, i.3.clone())).collect(),
            outputs: out_names,
            argv,
            timeout: Duration::from_secs_f64(profile.timeout_secs),
            max_output_bytes: profile.max_output_bytes,
            read_paths: profile.read_paths.clone(),
            require_sandbox: self.inner.config.require_sandbox,
        };
        let live = LiveRun {
            plan,
            cancel: Arc::new(AtomicBool::new(false)),
            started: None,
            tool: tool.entity_id,
            inputs: inputs.iter().map(|i| i.1).collect(),
            outputs: outputs.into_iter().map(|o| (o.1, o.2)).collect(),
            args: canonical::to_string(&resolved).expect("string map serializes"),
        };
        self.inner.store.lock().put_run(&record)?;
        runs.records.insert(run_id.clone(), record.clone());
        runs.live.insert(run_id.clone(), live);
        drop(runs);
        let queue = self.queue.lock();
        let sent = queue.as_ref().is_some_and(|tx| tx.send(run_id.clone()).is_ok());
        if !sent {
            return Err(ServiceError::new(ErrorCode::Internal, "service is shutting down"));
        }
        Ok(record)
    }

    fn may_see_run(run: &RunRecord, user: &str) -> bool {
        run.actor == user || run.tool_path.owner() == user
    }

    pub fn get_run(&self, user: &str, run_id: &str) -> Result<RunRecord> {
        let runs = self.inner.runs.lock();
        runs.snapshot(run_id)
            .filter(|r| Self::may_see_run(r, user))
            .ok_or_else(|| ServiceError::not_found(format!("run {run_id}")))
    }

    /// Runs of a tool visible to `user`, newest first.
    pub fn list_runs(&self, user: &str, tool_path: &LogicalPath) -> Result<Vec<RunRecord>> {
        let tool = self.read(|c| c.resolve(user, tool_path).map(|d| d.entity_id))?;
        let runs = self.inner.runs.lock();
        let mut out: Vec<RunRecord> = runs
            .records
            .values()
            .filter(|r| r.tool_id == tool && Self::may_see_run(r, user))
            .filter_map(|r| runs.snapshot(&r.run_id))
            .collect();
        out.sort_by(|a, b| b.queued_at.cmp(&a.queued_at).then_with(|| b.run_id.cmp(&a.run_id)));
        Ok(out)
    }

    pub fn cancel_run(&self, actor: &str, run_id: &str) -> Result<RunRecord> {
        let mut runs = self.inner.runs.lock();
        let snapshot = runs
            .snapshot(run_id)
            .filter(|r| r.actor == actor)
            .ok_or_else(|| ServiceError::not_found(format!("run {run_id}")))?;
        let rec = runs.records.get_mut(run_id).expect("snapshot exists");
        rec.transition(RunStatus::Cancelled)?;
        rec.running_time = snapshot.running_time;
        let rec = rec.clone();
        if let Some(live) = runs.live.get(run_id) {
            live.cancel.store(true, Ordering::SeqCst);
        }
        self.inner.store.lock().put_run(&rec)?;
        Ok(rec)
    }

    /// Stops accepting runs, cancels active ones and joins the workers.
    pub fn shutdown(&self) {
        self.inner.stopping.store(true, Ordering::SeqCst);
        for live in self.inner.runs.lock().live.values() {
            live.cancel.store(true, Ordering::SeqCst);
        }
        self.queue.lock().take();
        for handle in self.workers.lock().drain(..) {
            let _ = handle.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn worker(inner: &Inner, rx: &std::sync::Mutex<Receiver<String>>) {
    loop {
        let next = rx.lock().map(|r| r.recv());
        match next {
            Ok(Ok(run_id)) => execute_run(inner, &run_id),
            _ => return,
        }
    }
}

fn persist_run(inner: &Inner, run: &RunRecord) {
    if let Err(e) = inner.store.lock().put_run(run) {
        tracing::error!(run = %run.run_id, error = %e, "could not persist run record");
    }
}

fn execute_run(inner: &Inner, run_id: &str) {
    let now = inner.catalog.read().now();
    let (plan, cancel) = {
        let mut runs = inner.runs.lock();
        let stopping = inner.stopping.load(Ordering::SeqCst);
        let Some(rec) = runs.records.get_mut(run_id) else { return };
        if rec.status != RunStatus::Queued {
            runs.live.remove(run_id);
            return;
        }
        if stopping {
            let _ = rec.transition(RunStatus::Failed);
            rec.error = Some("service stopped before the run started".into());
            let rec = rec.clone();
            runs.live.remove(run_id);
            persist_run(inner, &rec);
            return;
        }
        let _ = rec.transition(RunStatus::Running);
        rec.started_at = Some(now);
        let rec = rec.clone();
        let live = runs.live.get_mut(run_id).expect("queued runs are live");
        live.started = Some(Instant::now());
        let out = (live.plan.clone(), Arc::clone(&live.cancel));
        persist_run(inner, &rec);
        out
    };
    tracing::info!(run = run_id, "run started");
    let finished = executor::execute(&plan, &cancel);

    let mut catalog = inner.catalog.write();
    let mut runs = inner.runs.lock();
    let Some(live) = runs.live.remove(run_id) else { return };
    let elapsed = live.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
    let rec = runs.records.get_mut(run_id).expect("live runs have records");
    rec.set_log_excerpt(&finished.log_tail);
    if rec.status == RunStatus::Running {
        rec.running_time = elapsed;
        match finished.outcome {
            Outcome::Succeeded { outputs } => {
                let files = live
                    .outputs
                    .iter()
                    .zip(outputs)
                    .map(|((path, mode), bytes)| ToolOutput { path: path.clone(), mode: *mode, bytes })
                    .collect();
                let registered = catalog.register_tool_outputs(&rec.actor, live.tool, &live.inputs, &live.args, run_id, files);
                match registered {
                    Ok((ids, edge)) => {
                        rec.output_ids = ids;
                        rec.edge_id = Some(edge);
                        rec.exit_code = Some(0);
                        let _ = rec.transition(RunStatus::Succeeded);
                    }
                    Err(e) => {
                        rec.exit_code = Some(0);
                        rec.error = Some(format!("registering outputs: {e}"));
                        let _ = rec.transition(RunStatus::Failed);
                    }
                }
            }
            Outcome::Failed { reason, exit_code } => {
                rec.exit_code = exit_code;
                rec.error = Some(reason);
                let _ = rec.transition(RunStatus::Failed);
            }
            Outcome::Cancelled => {
                rec.error = Some("service stopped during the run".into());
                let _ = rec.transition(RunStatus::Failed);
            }
        }
    }
    let rec = rec.clone();
    let mut store = inner.store.lock();
    if let Err(e) = store.persist(&mut catalog).and_then(|_| store.put_run(&rec)) {
        tracing::error!(run = run_id, error = %e, "could not persist run results");
    }
    tracing::info!(run = run_id, status = %rec.status, "run finished");
}
