//! Executes one planned run in a sandbox and harvests its outputs.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, Read, Seek, SeekFrom};
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use adma_core::tool::{unique_name, LOG_EXCERPT_BYTES};

use crate::sandbox;

/// Interval between checks for exit, cancellation and timeout.
pub const POLL_INTERVAL: Duration = Duration::from_millis(20);

/// Everything a worker needs to run a tool, resolved at launch time.
#[derive(Debug, Clone)]
pub struct RunPlan {
    /// `<root>/runs/<run-id>`
    pub dir: PathBuf,
    pub tool: (String, Vec<u8>),
    /// Input file names (already de-collided) and bytes.
    pub inputs: Vec<(String, Vec<u8>)>,
    /// Output file names, in binding order.
    pub outputs: Vec<String>,
    pub argv: Vec<String>,
    pub timeout: Duration,
    pub max_output_bytes: u64,
    pub read_paths: Vec<PathBuf>,
    pub require_sandbox: bool,
}

#[derive(Debug)]
pub enum Outcome {
    Succeeded { outputs: Vec<Vec<u8>> },
    Failed { reason: String, exit_code: Option<i32> },
    Cancelled,
}

/// The outcome plus the tail of the captured log.
#[derive(Debug)]
pub struct Finished {
    pub outcome: Outcome,
    pub log_tail: String,
}

/// Assigns sandbox file names: the tool first, then inputs, then outputs,
/// each by last path segment with `.1`, `.2`, ... suffixes on collision.
pub fn file_names<'a>(tool: &str, inputs: impl IntoIterator<Item = &'a str>, outputs: impl IntoIterator<Item = &'a str>) -> (String, Vec<String>, Vec<String>) {
    let mut used = BTreeSet::new();
    let tool = unique_name(tool, &mut used);
    let ins = inputs.into_iter().map(|n| unique_name(n, &mut used)).collect();
    let outs = outputs.into_iter().map(|n| unique_name(n, &mut used)).collect();
    (tool, ins, outs)
}

/// Writes `bytes` under the read-only `inputs` directory and links it
/// into `work` by name. The sandbox grants only read access to `inputs`,
/// so the file stays read-only even for a privileged tool.
fn materialize(inputs: &Path, work: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let target = inputs.join(name);
    fs::write(&target, bytes)?;
    fs::set_permissions(&target, fs::Permissions::from_mode(0o444))?;
    std::os::unix::fs::symlink(Path::new("..").join("inputs").join(name), work.join(name))
}

fn log_tail(path: &Path) -> String {
    let Ok(mut f) = File::open(path) else { return String::new() };
    let len = f.metadata().map_or(0, |m| m.len());
    let start = len.saturating_sub(LOG_EXCERPT_BYTES as u64);
    let mut buf = Vec::new();
    if f.seek(SeekFrom::Start(start)).is_ok() {
        let _ = f.read_to_end(&mut buf);
    }
    let text = String::from_utf8_lossy(&buf).into_owned();
    let mut cut = text.len().saturating_sub(LOG_EXCERPT_BYTES);
    while !text.is_char_boundary(cut) {
        cut += 1;
    }
    text[cut..].to_string()
}

/// Runs the plan to completion, cancellation or timeout. The working and
/// input directories are removed afterwards; `log.txt` is kept.
pub fn execute(plan: &RunPlan, cancel: &AtomicBool) -> Finished {
    let work = plan.dir.join("work");
    let inputs = plan.dir.join("inputs");
    let log_path = plan.dir.join("log.txt");
    let outcome = run(plan, &work, &inputs, &log_path, cancel).unwrap_or_else(|e| Outcome::Failed {
        reason: format!("sandbox error: {e}"),
        exit_code: None,
    });
    let _ = fs::remove_dir_all(&work);
    let _ = fs::remove_dir_all(&inputs);
    Finished { outcome, log_tail: log_tail(&log_path) }
}

fn run(plan: &RunPlan, work: &Path, inputs: &Path, log_path: &Path, cancel: &AtomicBool) -> io::Result<Outcome> {
    fs::create_dir_all(work)?;
    fs::create_dir_all(inputs)?;
    materialize(inputs, work, &plan.tool.0, &plan.tool.1)?;
    for (name, bytes) in &plan.inputs {
        materialize(inputs, work, name, bytes)?;
    }
    let log = File::create(log_path)?;
    if cancel.load(Ordering::SeqCst) {
        return Ok(Outcome::Cancelled);
    }
    let mut readable = plan.read_paths.clone();
    readable.push(inputs.to_path_buf());
    let mut child = sandbox::spawn(&plan.argv, work, &log, &readable, plan.require_sandbox)?;
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if cancel.load(Ordering::SeqCst) {
            sandbox::kill_group(&child);
            let _ = child.wait();
            return Ok(Outcome::Cancelled);
        }
        if started.elapsed() >= plan.timeout {
            sandbox::kill_group(&child);
            let _ = child.wait();
            return Ok(Outcome::Failed {
                reason: format!("timed out after {:.1} s", plan.timeout.as_secs_f64()),
                exit_code: None,
            });
        }
        std::thread::sleep(POLL_INTERVAL);
    };
    // Stray background processes of the tool die with the run.
    sandbox::kill_group(&child);
    if !status.success() {
        return Ok(Outcome::Failed { reason: format!("tool exited with {status}"), exit_code: status.code() });
    }
    let mut outputs = Vec::with_capacity(plan.outputs.len());
    let mut total = 0u64;
    for name in &plan.outputs {
        let path = work.join(name);
        let meta = match fs::symlink_metadata(&path) {
            Ok(m) if m.is_file() => m,
            _ => {
                return Ok(Outcome::Failed { reason: format!("tool did not produce {name}"), exit_code: Some(0) });
            }
        };
        total += meta.len();
        if total > plan.max_output_bytes {
            return Ok(Outcome::Failed {
                reason: format!("outputs exceed {} bytes", plan.max_output_bytes),
                exit_code: Some(0),
            });
        }
        outputs.push(fs::read(&path)?);
    }
    Ok(Outcome::Succeeded { outputs })
}
