//! Process sandbox: a private working directory, a cleared environment,
//! its own process group, and a Landlock filesystem policy allowing reads
//! of system directories and full access to the working directory only.

use std::fs::File;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use landlock::{
    path_beneath_rules, Access, AccessFs, Ruleset, RulesetAttr, RulesetCreated, RulesetCreatedAttr, RulesetStatus, ABI,
};

const SYSTEM_READ: [&str; 8] = ["/usr", "/lib", "/lib32", "/lib64", "/bin", "/sbin", "/etc", "/opt"];
const SEARCH_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

fn landlock_err(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(format!("landlock: {e}"))
}

fn existing(paths: impl IntoIterator<Item = PathBuf>) -> Vec<PathBuf> {
    paths.into_iter().filter(|p| p.exists()).collect()
}

fn ruleset(work: &Path, extra_read: &[PathBuf]) -> io::Result<RulesetCreated> {
    let abi = ABI::V3;
    let read = existing(SYSTEM_READ.iter().map(PathBuf::from).chain(extra_read.iter().cloned()));
    let devices = existing(["/dev/null", "/dev/zero", "/dev/urandom"].map(PathBuf::from));
    Ruleset::default()
        .handle_access(AccessFs::from_all(abi))
        .map_err(landlock_err)?
        .create()
        .map_err(landlock_err)?
        .add_rules(path_beneath_rules(&read, AccessFs::from_read(abi)))
        .map_err(landlock_err)?
        .add_rules(path_beneath_rules(&devices, AccessFs::ReadFile | AccessFs::WriteFile))
        .map_err(landlock_err)?
        .add_rules(path_beneath_rules([work], AccessFs::from_all(abi)))
        .map_err(landlock_err)
}

/// Starts `argv` inside `work` with stdout and stderr sent to `log`.
/// With `require_enforcement`, the child refuses to start when the kernel
/// cannot enforce the filesystem policy.
pub fn spawn(
    argv: &[String],
    work: &Path,
    log: &File,
    extra_read: &[PathBuf],
    require_enforcement: bool,
) -> io::Result<Child> {
    let (program, args) = argv.split_first().ok_or_else(|| io::Error::other("empty command"))?;
    let mut rules = Some(ruleset(work, extra_read)?);
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(work)
        .env_clear()
        .env("PATH", SEARCH_PATH)
        .env("HOME", work)
        .env("TMPDIR", work)
        .env("LANG", "C.UTF-8")
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log.try_clone()?)
        .process_group(0);
    // SAFETY: runs in the forked child before exec. It only issues the
    // prctl and landlock_restrict_self system calls on a ruleset built by
    // the parent, and touches no locks held by other parent threads.
    unsafe {
        cmd.pre_exec(move || {
            let rules = rules.take().ok_or_else(|| io::Error::other("sandbox already applied"))?;
            let status = rules.restrict_self().map_err(landlock_err)?;
            if require_enforcement && status.ruleset == RulesetStatus::NotEnforced {
                return Err(io::Error::other("landlock is not supported by this kernel"));
            }
            Ok(())
        });
    }
    cmd.spawn()
}

/// Sends SIGKILL to the child's whole process group.
pub fn kill_group(child: &Child) {
    if let Ok(pid) = i32::try_from(child.id()) {
        // SAFETY: killpg has no memory-safety preconditions; the group id is
        // the child's pid because it was started with process_group(0).
        unsafe {
            libc::killpg(pid, libc::SIGKILL);
        }
    }
}
