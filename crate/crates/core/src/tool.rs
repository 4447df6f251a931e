//! Tool argument specifications and the run lifecycle model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::id::EntityId;
use crate::meta::Mode;
use crate::path::LogicalPath;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("entity is not a tool")]
    NotATool,
    #[error("duplicate argument {0:?}")]
    DuplicateArg(String),
    #[error("invalid argument spec: {0}")]
    InvalidSpec(String),
    #[error("missing required argument {0:?}")]
    MissingArg(String),
    #[error("invalid binding: {0}")]
    InvalidBinding(String),
    #[error("unknown executor profile {0:?}")]
    UnknownProfile(String),
    #[error("run is already {0}")]
    AlreadyTerminal(RunStatus),
    #[error("illegal run transition {from} -> {to}")]
    InvalidTransition { from: RunStatus, to: RunStatus },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    String,
    Int,
    Float,
    Flag,
    PathIn,
    PathOut,
}

impl ArgKind {
    pub fn is_path(self) -> bool {
        matches!(self, ArgKind::PathIn | ArgKind::PathOut)
    }
}

/// One declared command-line argument of a tool.
///
/// `mode` applies to `path_out` arguments only and sets the mode of the
/// entity registered from that output (defaults to data).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

impl ArgSpec {
    pub fn new(name: &str, kind: ArgKind, required: bool) -> Self {
        ArgSpec { name: name.into(), kind, required, default: None, mode: None }
    }
}

fn check_literal(kind: ArgKind, name: &str, value: &str) -> Result<(), ToolError> {
    let ok = match kind {
        ArgKind::Int => value.parse::<i64>().is_ok(),
        ArgKind::Float => value.parse::<f64>().is_ok_and(f64::is_finite),
        ArgKind::Flag => matches!(value, "true" | "false"),
        ArgKind::String => true,
        ArgKind::PathIn | ArgKind::PathOut => LogicalPath::parse(value).is_ok(),
    };
    if ok {
        Ok(())
    } else {
        Err(ToolError::InvalidBinding(alloc::format!("{name}: {value:?} is not a valid {kind:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub tool_entity: EntityId,
    pub executor_profile: String,
    pub argspec: Vec<ArgSpec>,
}

/// An argument after binding: its spec and the bound literal or logical path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundArg {
    pub spec: ArgSpec,
    pub value: String,
}

impl ToolSpec {
    pub fn validate(&self) -> Result<(), ToolError> {
        let mut seen = BTreeSet::new();
        for arg in &self.argspec {
            let name_ok = !arg.name.is_empty()
                && arg.name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
            if !name_ok {
                return Err(ToolError::InvalidSpec(alloc::format!("bad argument name {:?}", arg.name)));
            }
            if !seen.insert(arg.name.as_str()) {
                return Err(ToolError::DuplicateArg(arg.name.clone()));
            }
            if arg.kind.is_path() && arg.default.is_some() {
                return Err(ToolError::InvalidSpec(alloc::format!("{}: path arguments take no default", arg.name)));
            }
            if let Some(d) = &arg.default {
                check_literal(arg.kind, &arg.name, d)
                    .map_err(|_| ToolError::InvalidSpec(alloc::format!("{}: bad default {d:?}", arg.name)))?;
            }
            match arg.mode {
                Some(_) if arg.kind != ArgKind::PathOut => {
                    return Err(ToolError::InvalidSpec(alloc::format!("{}: mode applies to path_out only", arg.name)))
                }
                Some(Mode::Collection) => {
                    return Err(ToolError::InvalidSpec(alloc::format!("{}: outputs cannot be collections", arg.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Checks bindings against the spec: every name declared, every
    /// required argument bound, literals well-formed. Unbound optional
    /// arguments take their default or are omitted.
    pub fn bind(&self, bindings: &BTreeMap<String, String>) -> Result<Vec<BoundArg>, ToolError> {
        for name in bindings.keys() {
            if !self.argspec.iter().any(|a| a.name == *name) {
                return Err(ToolError::InvalidBinding(alloc::format!("unknown argument {name:?}")));
            }
        }
        let mut out = Vec::new();
        let mut outputs = BTreeSet::new();
        for spec in &self.argspec {
            let value = match (bindings.get(&spec.name), &spec.default) {
                (Some(v), _) => v.clone(),
                (None, Some(d)) => d.clone(),
                (None, None) if spec.required => return Err(ToolError::MissingArg(spec.name.clone())),
                (None, None) => continue,
            };
            check_literal(spec.kind, &spec.name, &value)?;
            if spec.kind == ArgKind::PathOut && !outputs.insert(value.clone()) {
                return Err(ToolError::InvalidBinding(alloc::format!("output {value} bound twice")));
            }
            out.push(BoundArg { spec: spec.clone(), value });
        }
        Ok(out)
    }
}

/// Renders bound arguments as `--name value` pairs in spec order. Path
/// arguments are replaced by their sandbox file names; a true flag becomes
/// a bare `--name` and a false flag is dropped.
pub fn command_args(bound: &[BoundArg], file_names: &BTreeMap<String, String>) -> Vec<String> {
    let mut argv = Vec::new();
    for arg in bound {
        let flag = alloc::format!("--{}", arg.spec.name);
        match arg.spec.kind {
            ArgKind::Flag => {
                if arg.value == "true" {
                    argv.push(flag);
                }
            }
            ArgKind::PathIn | ArgKind::PathOut => {
                argv.push(flag);
                argv.push(file_names.get(&arg.spec.name).cloned().unwrap_or_default());
            }
            _ => {
                argv.push(flag);
                argv.push(arg.value.clone());
            }
        }
    }
    argv
}

/// Expands an executor command template. `{tool}` is replaced by the tool
/// file name wherever it occurs; an element equal to `{args}` is replaced
/// by the argument list, which is appended when no such element exists.
pub fn expand_template(template: &[String], tool_file: &str, args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut placed = false;
    for part in template {
        if part == "{args}" {
            out.extend(args.iter().cloned());
            placed = true;
        } else {
            out.push(part.replace("{tool}", tool_file));
        }
    }
    if !placed {
        out.extend(args.iter().cloned());
    }
    out
}

/// Returns `name`, or `name.1`, `name.2`, ... whichever is unused, and marks it used.
pub fn unique_name(name: &str, used: &mut BTreeSet<String>) -> String {
    let mut candidate = name.to_string();
    let mut n = 0;
    while used.contains(&candidate) {
        n += 1;
        candidate = alloc::format!("{name}.{n}");
    }
    used.insert(candidate.clone());
    candidate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Succeeded | RunStatus::Failed | RunStatus::Cancelled)
    }

    /// queued -> running -> {succeeded, failed, cancelled}; a queued run
    /// may also be cancelled (or failed, when it cannot be started).
    pub fn can_transition(self, to: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, to),
            (Queued, Running) | (Queued, Cancelled) | (Queued, Failed) | (Running, Succeeded) | (Running, Failed) | (Running, Cancelled)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Queued => "queued",
            RunStatus::Running => "running",
            RunStatus::Succeeded => "succeeded",
            RunStatus::Failed => "failed",
            RunStatus::Cancelled => "cancelled",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle record of one sandboxed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub tool_id: EntityId,
    pub tool_path: LogicalPath,
    pub container_id: String,
    pub image: String,
    pub status: RunStatus,
    pub queued_at: u64,
    pub started_at: Option<u64>,
    /// Seconds, from a monotonic clock.
    pub running_time: f64,
    pub actor: String,
    pub bindings: BTreeMap<String, String>,
    pub output_ids: Vec<EntityId>,
    pub edge_id: Option<u64>,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
    pub log_excerpt: String,
}

/// Upper bound on [`RunRecord::log_excerpt`].
pub const LOG_EXCERPT_BYTES: usize = 64 * 1024;

impl RunRecord {
    pub fn transition(&mut self, to: RunStatus) -> Result<(), ToolError> {
        if self.status.is_terminal() {
            return Err(ToolError::AlreadyTerminal(self.status));
        }
        if !self.status.can_transition(to) {
            return Err(ToolError::InvalidTransition { from: self.status, to });
        }
        self.status = to;
        Ok(())
    }

    /// Keeps the last [`LOG_EXCERPT_BYTES`] of `log`, cut on a char boundary.
    pub fn set_log_excerpt(&mut self, log: &str) {
        let mut start = log.len().saturating_sub(LOG_EXCERPT_BYTES);
        while !log.is_char_boundary(start) {
            start += 1;
        }
        self.log_excerpt = log[start..].into();
    }
}
