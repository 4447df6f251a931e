//! Service configuration: a TOML file plus environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A named local runtime for tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorProfile {
    pub name: String,
    /// Argument vector. `{tool}` becomes the tool's file name; an element
    /// `{args}` becomes the bound arguments (appended if absent).
    pub command: Vec<String>,
    pub timeout_secs: f64,
    pub max_output_bytes: u64,
    /// Extra host paths the tool may read, besides the system directories.
    #[serde(default)]
    pub read_paths: Vec<PathBuf>,
    /// Tool file extensions that default to this profile.
    #[serde(default)]
    pub extensions: Vec<String>,
}

impl ExecutorProfile {
    fn builtin(name: &str, command: &[&str], ext: &str) -> Self {
        ExecutorProfile {
            name: name.into(),
            command: command.iter().map(|s| s.to_string()).collect(),
            timeout_secs: 300.0,
            max_output_bytes: 256 << 20,
            read_paths: Vec::new(),
            extensions: vec![ext.into()],
        }
    }
}

fn default_listen() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("literal address")
}

fn default_workers() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_profiles() -> Vec<ExecutorProfile> {
    vec![
        ExecutorProfile::builtin("python", &["python3", "-I", "{tool}", "{args}"], "py"),
        ExecutorProfile::builtin("shell", &["sh", "{tool}", "{args}"], "sh"),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data_root: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Key authorizing account creation; account creation is disabled when unset.
    #[serde(default)]
    pub admin_key: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Refuse to run tools when the kernel cannot enforce the filesystem sandbox.
    #[serde(default = "default_true")]
    pub require_sandbox: bool,
    #[serde(default = "default_profiles")]
    pub profiles: Vec<ExecutorProfile>,
}

impl Config {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Config {
            data_root: data_root.into(),
            listen: default_listen(),
            admin_key: None,
            workers: default_workers(),
            require_sandbox: true,
            profiles: default_profiles(),
        }
    }

    /// Loads `path` if given, then applies `ADMA_DATA_ROOT`, `ADMA_LISTEN`
    /// and `ADMA_ADMIN_KEY`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.into(), source })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse { path: p.into(), source })?
            }
            None => Config::new(std::env::var_os("ADMA_DATA_ROOT").ok_or_else(|| {
                ConfigError::Invalid("no configuration file given and ADMA_DATA_ROOT is unset".into())
            })?),
        };
        if let Some(root) = std::env::var_os("ADMA_DATA_ROOT") {
            cfg.data_root = root.into();
        }
        if let Ok(listen) = std::env::var("ADMA_LISTEN") {
            cfg.listen = listen.parse().map_err(|_| ConfigError::Invalid(format!("ADMA_LISTEN {listen:?}")))?;
        }
        if let Ok(key) = std::env::var("ADMA_ADMIN_KEY") {
            cfg.admin_key = Some(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.admin_key.as_deref() == Some("") {
            return Err(ConfigError::Invalid("admin_key must not be empty".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.profiles {
            if !names.insert(p.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate profile {:?}", p.name)));
            }
            if !(p.timeout_secs > 0.0 && p.timeout_secs.is_finite()) {
                return Err(ConfigError::Invalid(format!("profile {:?}: timeout must be positive", p.name)));
            }
            if p.command.is_empty() {
                return Err(ConfigError::Invalid(format!("profile {:?}: empty command", p.name)));
            }
        }
        Ok(())
    }

    pub fn profile(&self, name: &str) -> Option<&ExecutorProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    /// The profile a tool runs under when it has no stored spec.
    pub fn profile_for_format(&self, format: &str) -> Option<&ExecutorProfile> {
        self.profiles.iter().find(|p| p.extensions.iter().any(|e| e == format))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let cfg: Config = toml::from_str(include_str!("../../../adma.example.toml")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.profiles, default_profiles());
    }

    #[test]
    fn parses_file_with_defaults() {
        let cfg: Config = toml::from_str(
            r#"
            data_root = "/srv/adma"
            listen = "0.0.0.0:9000"
            [[profiles]]
            name = "r"
            command = ["Rscript", "{tool}", "{args}"]
            timeout_secs = 60
            max_output_bytes = 1000
            extensions = ["r"]
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.workers, 4);
        assert!(cfg.require_sandbox);
        assert_eq!(cfg.profile_for_format("r").unwrap().name, "r");
        assert!(cfg.profile("python").is_none());
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut cfg = Config::new("/x");
        cfg.profiles[0].timeout_secs = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::new("/x");
        cfg.profiles.push(cfg.profiles[0].clone());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_profiles_cover_python_and_shell() {
        let cfg = Config::new("/x");
        assert_eq!(cfg.profile_for_format("py").unwrap().name, "python");
        assert_eq!(cfg.profile_for_format("sh").unwrap().name, "shell");
    }
}
