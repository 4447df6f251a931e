//! The `adma` command line: `serve` hosts the API, every other command is
//! a thin client of one endpoint.
//!
//! Exit codes: 0 success, 2 usage, 3 unauthorized, 4 not found,
//! 5 bad request, 6 conflict, 7 internal, 8 connection or configuration,
//! 9 a waited-for run did not succeed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use adma_core::ErrorCode;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::client::{Client, ClientError, Method};
use crate::config::Config;
use crate::service::Service;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONNECTION: i32 = 8;
pub const EXIT_RUN_UNSUCCESSFUL: i32 = 9;

pub fn exit_code(code: ErrorCode) -> i32 {
    match code {
        ErrorCode::Unauthorized => 3,
        ErrorCode::NotFound => 4,
        ErrorCode::BadRequest => 5,
        ErrorCode::Conflict => 6,
        ErrorCode::Internal => 7,
    }
}

pub const DEFAULT_URL: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "adma", version, about = "Agricultural data management service and client")]
pub struct Cli {
    /// Print the raw JSON response body.
    #[arg(long, global = true)]
    pub json: bool,
    /// Server URL (default: ADMA_URL, then the client config file).
    #[arg(long, global = true)]
    pub url: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the API server in the foreground.
    Serve {
        /// Service configuration file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Listening address, overriding the configuration.
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Account administration (requires the admin key).
    #[command(subcommand)]
    User(UserCommand),
    /// Upload a local file.
    Up {
        local: PathBuf,
        path: String,
        #[arg(long, default_value = "data")]
        mode: String,
        /// Initial metadata as a JSON object.
        #[arg(long)]
        meta: Option<String>,
    },
    /// Create a folder.
    Mkdir {
        path: String,
        #[arg(long, default_value = "data")]
        mode: String,
    },
    /// List a folder or collection.
    Ls { path: String },
    /// Read or edit an entity's metadata.
    #[command(subcommand)]
    Meta(MetaCommand),
    /// Semantic search with optional facet filters.
    Search(SearchArgs),
    /// Launch a tool run.
    Run {
        tool: String,
        /// Argument binding NAME=VALUE (repeatable).
        #[arg(long = "arg", value_name = "NAME=VALUE")]
        args: Vec<String>,
        /// Poll until the run ends; exit 9 unless it succeeded.
        #[arg(long)]
        wait: bool,
        /// Poll interval in seconds for --wait.
        #[arg(long, default_value_t = 2.0)]
        poll: f64,
    },
    /// List runs of a tool, newest first.
    Runs { tool: String },
    /// Show one run.
    Status { run_id: String },
    /// Cancel a queued or running run.
    Cancel { run_id: String },
    /// Read or replace a tool's argument spec.
    #[command(subcommand)]
    Argspec(ArgspecCommand),
    /// Show the provenance pipeline around an entity.
    Pipeline {
        path: String,
        #[arg(long, default_value_t = crate::api::DEFAULT_DEPTH)]
        depth: usize,
        /// Print only the Graphviz rendering.
        #[arg(long)]
        dot: bool,
        /// Treat PATH as an entity id (reaches deleted entities).
        #[arg(long)]
        id: bool,
    },
    /// Make an entity and its subtree public.
    Publish { path: String },
    /// Make an entity and its subtree private.
    Unpublish { path: String },
    /// Create collections and manage their members.
    #[command(subcommand)]
    Coll(CollCommand),
    /// Delete an entity and its subtree.
    Rm { path: String },
    /// Move an entity.
    Mv { src: String, dst: String },
    /// Copy an entity (the copy is private).
    Cp { src: String, dst: String },
    /// Write an entity's content to standard output.
    Cat { path: String },
}

#[derive(Debug, Subcommand)]
pub enum UserCommand {
    /// Create an account and print its key.
    Add {
        username: String,
        #[arg(long, env = "ADMA_ADMIN_KEY", hide_env_values = true)]
        admin_key: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetaCommand {
    /// Show metadata.
    Get { path: String },
    /// Update metadata with FIELD=VALUE pairs: category, description,
    /// labels (comma-separated), realtime (true/false), time_range
    /// (START,END or none), geo (LAT,LON or MIN_LAT,MIN_LON,MAX_LAT,MAX_LON or none).
    Set {
        path: String,
        #[arg(value_name = "FIELD=VALUE", required = true)]
        pairs: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub query: String,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub category: Option<String>,
    /// Label to match (repeatable; any one suffices).
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Only public entities.
    #[arg(long, conflicts_with = "private")]
    pub public: bool,
    /// Only private entities.
    #[arg(long)]
    pub private: bool,
    #[arg(long)]
    pub realtime: Option<bool>,
    /// Time range start, UTC seconds.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<i64>,
    /// Time range end, UTC seconds.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<i64>,
    /// MIN_LAT,MIN_LON,MAX_LAT,MAX_LON
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<String>,
    #[arg(short, default_value_t = crate::api::DEFAULT_K)]
    pub k: usize,
    /// Include 2-D projection coordinates of the hits.
    #[arg(long)]
    pub projection: bool,
}

#[derive(Debug, Subcommand)]
pub enum ArgspecCommand {
    /// Show a tool's argument spec.
    Get { tool: String },
    /// Replace a tool's argument spec. Each SPEC is NAME:KIND with optional
    /// `:required`, `:default=VALUE` and `:mode=MODE` suffixes; KIND is one
    /// of string, int, float, flag, path_in, path_out.
    Set {
        tool: String,
        #[arg(value_name = "SPEC")]
        specs: Vec<String>,
        /// Read the spec as a JSON array from a file instead.
        #[arg(long, conflicts_with = "specs")]
        file: Option<PathBuf>,
        /// Executor profile (defaults to the one matching the tool's extension).
        #[arg(long)]
        profile: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CollCommand {
    /// Create a collection.
    Create {
        path: String,
        #[arg(long)]
        meta: Option<String>,
    },
    /// Add a member.
    Add { collection: String, member: String },
    /// Remove a member.
    Rm { collection: String, member: String },
}

/// A command-line failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    /// Raw error envelope, printed verbatim under `--json`.
    pub body: Option<Vec<u8>>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into(), body: None }
    }

    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONNECTION, message: message.into(), body: None }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Transport(m) => Failure::config(format!("cannot reach server: {m}")),
            ClientError::Api { code, message, body } => {
                Failure { code: exit_code(code), message: format!("{code}: {message}"), body: Some(body) }
            }
        }
    }
}

type CliResult = Result<i32, Failure>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientConfig {
    url: Option<String>,
    key: Option<String>,
}

fn client_config_path() -> Option<PathBuf> {
    let base = std::env::var_os("XDG_CONFIG_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| Path::new(&h).join(".config")))?;
    Some(base.join("adma").join("config.toml"))
}

fn load_client_config() -> Result<ClientConfig, Failure> {
    let Some(path) = client_config_path() else { return Ok(ClientConfig::default()) };
    match std::fs::read_to_string(&path) {
        Ok(text) => toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ClientConfig::default()),
        Err(e) => Err(Failure::config(format!("{}: {e}", path.display()))),
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let json = cli.json;
    match execute(cli, out) {
        Ok(code) => code,
        Err(f) => {
            match (&f.body, json) {
                (Some(body), true) => {
                    let _ = err.write_all(body);
                    let _ = writeln!(err);
                }
                _ => {
                    let _ = writeln!(err, "error: {}", f.message);
                }
            }
            f.code
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    if let Command::Serve { config, listen } = &cli.command {
        return serve(config.as_deref(), *listen, out);
    }
    let file = load_client_config()?;
    let url = cli
        .url
        .clone()
        .or_else(|| std::env::var("ADMA_URL").ok())
        .or(file.url)
        .unwrap_or_else(|| DEFAULT_URL.to_string());
    let key = match &cli.command {
        Command::User(UserCommand::Add { admin_key, .. }) => Some(admin_key.clone()),
        _ => Some(std::env::var("ADMA_KEY").ok().or(file.key).ok_or_else(|| {
            Failure::config("no API key: set ADMA_KEY or `key` in ~/.config/adma/config.toml")
        })?),
    };
    let client = Client::new(&url, key);
    Ctx { client, json: cli.json, out }.dispatch(cli.command)
}

fn serve(config: Option<&Path>, listen: Option<std::net::SocketAddr>, out: &mut dyn Write) -> CliResult {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .try_init();
    let mut cfg = Config::load(config).map_err(|e| Failure::config(e.to_string()))?;
    if let Some(addr) = listen {
        cfg.listen = addr;
    }
    let service = Arc::new(Service::open(cfg.clone()).map_err(|e| Failure { code: exit_code(e.code), message: e.message, body: None })?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::config(format!("starting runtime: {e}")))?;
    let app = crate::api::router(Arc::clone(&service));
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
        let addr = listener.local_addr()?;
        tracing::info!(%addr, root = %cfg.data_root.display(), "serving");
        writeln!(out, "listening on http://{addr}")?;
        out.flush()?;
        axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await
    });
    drop(runtime);
    service.shutdown();
    result.map(|_| EXIT_OK).map_err(|e| Failure::config(format!("server: {e}")))
}

async fn shutdown_signal() {
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}

struct Ctx<'a> {
    client: Client,
    json: bool,
    out: &'a mut dyn Write,
}

fn parse_json_arg(raw: &str, what: &str) -> Result<Value, Failure> {
    serde_json::from_str(raw).map_err(|e| Failure::usage(format!("{what}: invalid JSON: {e}")))
}

fn split_pair<'s>(raw: &'s str, what: &str) -> Result<(&'s str, &'s str), Failure> {
    raw.split_once('=').ok_or_else(|| Failure::usage(format!("{what}: expected NAME=VALUE, got {raw:?}")))
}

fn numbers(raw: &str, field: &str) -> Result<Vec<f64>, Failure> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::usage(format!("{field}: not a number: {s:?}"))))
        .collect()
}

/// Builds a metadata patch object from FIELD=VALUE pairs.
pub fn patch_from_pairs(pairs: &[String]) -> Result<Value, Failure> {
    let mut patch = Map::new();
    for raw in pairs {
        let (field, value) = split_pair(raw, "meta set")?;
        let v = match field {
            "category" | "description" => Value::String(value.into()),
            "labels" => Value::Array(
                value.split(',').filter(|s| !s.is_empty()).map(|s| Value::String(s.into())).collect(),
            ),
            "realtime" => match value {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => return Err(Failure::usage("realtime: expected true or false")),
            },
            "time_range" if value == "none" => Value::Null,
            "time_range" => match numbers(value, field)?[..] {
                [start, end] if start.fract() == 0.0 && end.fract() == 0.0 => {
                    json!([start as i64, end as i64])
                }
                _ => return Err(Failure::usage("time_range: expected START,END in whole seconds")),
            },
            "geo" if value == "none" => Value::Null,
            "geo" => match numbers(value, field)?[..] {
                [lat, lon] => json!({"type": "point", "lat": lat, "lon": lon}),
                [min_lat, min_lon, max_lat, max_lon] => {
                    json!({"type": "bbox", "min_lat": min_lat, "min_lon": min_lon, "max_lat": max_lat, "max_lon": max_lon})
                }
                _ => return Err(Failure::usage("geo: expected LAT,LON or four bbox numbers")),
            },
            // Immutable and unknown fields are passed through so the server reports them.
            _ => Value::String(value.into()),
        };
        patch.insert(field.into(), v);
    }
    Ok(Value::Object(patch))
}

/// Parses `NAME:KIND[:required][:default=VALUE][:mode=MODE]`.
pub fn argspec_from_tokens(tokens: &[String]) -> Result<Value, Failure> {
    let mut specs = Vec::new();
    for raw in tokens {
        let mut parts = raw.split(':');
        let name = parts.next().unwrap_or_default();
        let kind = parts.next().ok_or_else(|| Failure::usage(format!("argspec {raw:?}: expected NAME:KIND")))?;
        let mut spec = Map::new();
        spec.insert("name".into(), Value::String(name.into()));
        spec.insert("kind".into(), Value::String(kind.into()));
        spec.insert("required".into(), Value::Bool(false));
        for opt in parts {
            match opt.split_once('=') {
                None if opt == "required" => {
                    spec.insert("required".into(), Value::Bool(true));
                }
                Some(("default", v)) => {
                    spec.insert("default".into(), Value::String(v.into()));
                }
                Some(("mode", v)) => {
                    spec.insert("mode".into(), Value::String(v.into()));
                }
                _ => return Err(Failure::usage(format!("argspec {raw:?}: unknown option {opt:?}"))),
            }
        }
        specs.push(Value::Object(spec));
    }
    Ok(Value::Array(specs))
}

impl Ctx<'_> {
    fn get(&self, endpoint: &str, params: &[(&str, &str)]) -> Result<Vec<u8>, Failure> {
        Ok(self.client.call(Method::Get, endpoint, params, None)?)
    }

    fn post(&self, endpoint: &str, params: &[(&str, &str)], body: Option<&[u8]>) -> Result<Vec<u8>, Failure> {
        Ok(self.client.call(Method::Post, endpoint, params, body)?)
    }

    /// Prints the body raw under `--json`, otherwise through `render`.
    fn emit(&mut self, body: &[u8], render: fn(&Value, &mut dyn Write) -> io::Result<()>) -> CliResult {
        let io_err = |e: io::Error| Failure::config(format!("writing output: {e}"));
        if self.json {
            self.out.write_all(body).map_err(io_err)?;
        } else {
            let value: Value = serde_json::from_slice(body)
                .map_err(|e| Failure::config(format!("malformed server response: {e}")))?;
            render(&value, self.out).map_err(io_err)?;
        }
        self.out.flush().map_err(io_err)?;
        Ok(EXIT_OK)
    }

    fn dispatch(mut self, command: Command) -> CliResult {
        match command {
            Command::Serve { .. } => unreachable!("handled before connecting"),
            Command::User(UserCommand::Add { username, .. }) => {
                let body = self.post("/api_create_user", &[("username", &username)], None)?;
                self.emit(&body, render_object)
            }
            Command::Up { local, path, mode, meta } => {
                let bytes = std::fs::read(&local).map_err(|e| Failure::usage(format!("{}: {e}", local.display())))?;
                let mut params = vec![("path", path.as_str()), ("mode", mode.as_str())];
                if let Some(m) = &meta {
                    parse_json_arg(m, "--meta")?;
                    params.push(("meta", m.as_str()));
                }
                let body = self.post("/api_upload", &params, Some(&bytes))?;
                self.emit(&body, render_object)
            }
            Command::Mkdir { path, mode } => {
                let body = self.post("/api_mkdir", &[("path", &path), ("mode", &mode)], None)?;
                self.emit(&body, render_object)
            }
            Command::Ls { path } => {
                let body = self.get("/api_list_sub_items", &[("path", &path)])?;
                self.emit(&body, render_docs)
            }
            Command::Meta(MetaCommand::Get { path }) => {
                let body = self.get("/api_meta_data", &[("path", &path)])?;
                self.emit(&body, render_object)
            }
            Command::Meta(MetaCommand::Set { path, pairs }) => {
                let patch = patch_from_pairs(&pairs)?;
                let body = self.post("/api_update_meta", &[("path", &path)], Some(patch.to_string().as_bytes()))?;
                self.emit(&body, render_object)
            }
            Command::Search(a) => {
                let k = a.k.to_string();
                let labels = a.labels.join(",");
                let from = a.from.map(|v| v.to_string());
                let to = a.to.map(|v| v.to_string());
                let realtime = a.realtime.map(|v| v.to_string());
                let mut params = vec![("q", a.query.as_str()), ("k", k.as_str())];
                let optional = [
                    ("mode", a.mode.as_deref()),
                    ("format", a.format.as_deref()),
                    ("category", a.category.as_deref()),
                    ("labels", (!a.labels.is_empty()).then_some(labels.as_str())),
                    ("privilege", if a.public { Some("public") } else if a.private { Some("private") } else { None }),
                    ("realtime", realtime.as_deref()),
                    ("from", from.as_deref()),
                    ("to", to.as_deref()),
                    ("bbox", a.bbox.as_deref()),
                    ("projection", a.projection.then_some("true")),
                ];
                params.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
                let body = self.get("/api_search", &params)?;
                self.emit(&body, render_search)
            }
            Command::Run { tool, args, wait, poll } => {
                let mut bindings = BTreeMap::new();
                for raw in &args {
                    let (k, v) = split_pair(raw, "--arg")?;
                    bindings.insert(k.to_string(), v.to_string());
                }
                let payload = serde_json::to_vec(&bindings).expect("string map serializes");
                let body = self.post("/api_run", &[("path", &tool)], Some(&payload))?;
                if !wait {
                    return self.emit(&body, render_object);
                }
                let run: Value = serde_json::from_slice(&body)
                    .map_err(|e| Failure::config(format!("malformed server response: {e}")))?;
                let run_id = run["run_id"].as_str().unwrap_or_default().to_string();
                let interval = Duration::from_secs_f64(poll.max(0.05));
                loop {
                    let body = self.get("/api_run_status", &[("run_id", &run_id)])?;
                    let rec: Value = serde_json::from_slice(&body)
                        .map_err(|e| Failure::config(format!("malformed server response: {e}")))?;
                    let status = rec["status"].as_str().unwrap_or_default().to_string();
                    if matches!(status.as_str(), "succeeded" | "failed" | "cancelled") {
                        self.emit(&body, render_object)?;
                        return Ok(if status == "succeeded" { EXIT_OK } else { EXIT_RUN_UNSUCCESSFUL });
                    }
                    std::thread::sleep(interval);
                }
            }
            Command::Runs { tool } => {
                let body = self.get("/api_runs", &[("path", &tool)])?;
                self.emit(&body, render_runs)
            }
            Command::Status { run_id } => {
                let body = self.get("/api_run_status", &[("run_id", &run_id)])?;
                self.emit(&body, render_object)
            }
            Command::Cancel { run_id } => {
                let body = self.post("/api_cancel_run", &[("run_id", &run_id)], None)?;
                self.emit(&body, render_object)
            }
            Command::Argspec(ArgspecCommand::Get { tool }) => {
                let body = self.get("/api_argspec", &[("path", &tool)])?;
                self.emit(&body, render_object)
            }
            Command::Argspec(ArgspecCommand::Set { tool, specs, file, profile }) => {
                let spec = match file {
                    Some(f) => {
                        let text = std::fs::read_to_string(&f).map_err(|e| Failure::usage(format!("{}: {e}", f.display())))?;
                        parse_json_arg(&text, "--file")?
                    }
                    None => argspec_from_tokens(&specs)?,
                };
                let mut params = vec![("path", tool.as_str())];
                if let Some(p) = &profile {
                    params.push(("profile", p.as_str()));
                }
                let body = self.post("/api_argspec", &params, Some(spec.to_string().as_bytes()))?;
                self.emit(&body, render_object)
            }
            Command::Pipeline { path, depth, dot, id } => {
                let depth = depth.to_string();
                let focus = if id { "id" } else { "path" };
                let body = self.get("/api_pipeline", &[(focus, &path), ("depth", &depth)])?;
                if dot && !self.json {
                    let value: Value = serde_json::from_slice(&body)
                        .map_err(|e| Failure::config(format!("malformed server response: {e}")))?;
                    let text = value["dot"].as_str().unwrap_or_default();
                    write!(self.out, "{text}").map_err(|e| Failure::config(e.to_string()))?;
                    return Ok(EXIT_OK);
                }
                self.emit(&body, render_pipeline)
            }
            Command::Publish { path } => {
                let body = self.post("/api_visibility", &[("path", &path), ("privilege", "public")], None)?;
                self.emit(&body, render_lines)
            }
            Command::Unpublish { path } => {
                let body = self.post("/api_visibility", &[("path", &path), ("privilege", "private")], None)?;
                self.emit(&body, render_lines)
            }
            Command::Coll(CollCommand::Create { path, meta }) => {
                let patch = meta.as_deref().map(|m| parse_json_arg(m, "--meta")).transpose()?;
                let payload = patch.map(|p| p.to_string());
                let body = self.post(
                    "/api_collection",
                    &[("action", "create"), ("path", &path)],
                    payload.as_deref().map(str::as_bytes),
                )?;
                self.emit(&body, render_object)
            }
            Command::Coll(CollCommand::Add { collection, member }) => {
                let body =
                    self.post("/api_collection", &[("action", "add"), ("path", &collection), ("member", &member)], None)?;
                self.emit(&body, render_object)
            }
            Command::Coll(CollCommand::Rm { collection, member }) => {
                let body =
                    self.post("/api_collection", &[("action", "rm"), ("path", &collection), ("member", &member)], None)?;
                self.emit(&body, render_object)
            }
            Command::Rm { path } => {
                let body = self.post("/api_delete", &[("path", &path)], None)?;
                self.emit(&body, |v, out| render_lines(&v["removed"], out))
            }
            Command::Mv { src, dst } => {
                let body = self.post("/api_move", &[("src", &src), ("dst", &dst)], None)?;
                self.emit(&body, render_object)
            }
            Command::Cp { src, dst } => {
                let body = self.post("/api_copy", &[("src", &src), ("dst", &dst)], None)?;
                self.emit(&body, render_object)
            }
            Command::Cat { path } => {
                let body = self.get("/api_download", &[("path", &path)])?;
                self.out.write_all(&body).and_then(|_| self.out.flush()).map_err(|e| Failure::config(e.to_string()))?;
                Ok(EXIT_OK)
            }
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn render_object(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    match v.as_object() {
        Some(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            for (k, val) in map {
                if k == "log_excerpt" {
                    continue;
                }
                writeln!(out, "{k:width$}  {}", scalar(val))?;
            }
            if let Some(Value::String(log)) = map.get("log_excerpt") {
                if !log.is_empty() {
                    writeln!(out, "--- log ---\n{}", log.trim_end())?;
                }
            }
            Ok(())
        }
        None => writeln!(out, "{}", scalar(v)),
    }
}

fn render_docs(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    for d in v.as_array().into_iter().flatten() {
        let folder = d["is_folder"].as_bool().unwrap_or(false);
        writeln!(
            out,
            "{:<10} {:<7} {:>10}  {}{}",
            scalar(&d["mode"]),
            scalar(&d["privilege"]),
            d["size_bytes"].as_u64().unwrap_or(0),
            scalar(&d["path"]),
            if folder { "/" } else { "" }
        )?;
    }
    Ok(())
}

fn render_search(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    let hits = if v.is_array() { v } else { &v["hits"] };
    for h in hits.as_array().into_iter().flatten() {
        let sim = h["similarity"].as_f64().unwrap_or(0.0);
        writeln!(out, "{sim:.4}  {:<10} {}", scalar(&h["mode"]), scalar(&h["path"]))?;
    }
    for p in v["projection"].as_array().into_iter().flatten() {
        writeln!(out, "xy {} {} {}", scalar(&p["x"]), scalar(&p["y"]), scalar(&p["entity_id"]))?;
    }
    Ok(())
}

fn render_runs(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    for r in v.as_array().into_iter().flatten() {
        writeln!(
            out,
            "{}  {:<9}  {:>8.2}s  {}",
            scalar(&r["run_id"]),
            scalar(&r["status"]),
            r["running_time"].as_f64().unwrap_or(0.0),
            scalar(&r["actor"])
        )?;
    }
    Ok(())
}

fn render_pipeline(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    for n in v["nodes"].as_array().into_iter().flatten() {
        let deleted = if n["deleted"].as_bool().unwrap_or(false) { " (deleted)" } else { "" };
        writeln!(out, "node {} {}{deleted}", scalar(&n["entity_id"]), scalar(&n["path_at_creation"]))?;
    }
    for e in v["edges"].as_array().into_iter().flatten() {
        writeln!(
            out,
            "edge {} {} {} -> {}",
            scalar(&e["edge_id"]),
            scalar(&e["kind"]),
            scalar(&e["inputs"]),
            scalar(&e["outputs"])
        )?;
    }
    Ok(())
}

fn render_lines(v: &Value, out: &mut dyn Write) -> io::Result<()> {
    for item in v.as_array().into_iter().flatten() {
        writeln!(out, "{}", scalar(item))?;
    }
    Ok(())
}
