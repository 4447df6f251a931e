//! Logical paths: the user-visible address of an entity.
//!
//! A path is absolute, slash-separated, has no trailing slash, and every
//! segment matches `[A-Za-z0-9._-]+`. The first segment is the owner's
//! username; `/username` itself is a reserved root, not an entity.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Name of the per-user data root under `/username`.
pub const DATA_ROOT: &str = "ag_data";
/// Name of the synthesized folder listing other users' public entities.
pub const PUBLIC_DATA: &str = "public_data";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path must be absolute: {0:?}")]
    NotAbsolute(String),
    #[error("path has an empty segment: {0:?}")]
    EmptySegment(String),
    #[error("invalid character in path segment {0:?}")]
    InvalidSegment(String),
    #[error("segment {0:?} is reserved")]
    Reserved(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalPath(String);

fn valid_segment(seg: &str) -> bool {
    !seg.is_empty()
        && seg
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// Usernames are `[a-z0-9_]{1,32}`.
pub fn is_valid_username(name: &str) -> bool {
    (1..=32).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl LogicalPath {
    pub fn parse(text: &str) -> Result<Self, PathError> {
        let rest = text
            .strip_prefix('/')
            .ok_or_else(|| PathError::NotAbsolute(text.into()))?;
        if rest.is_empty() {
            return Err(PathError::EmptySegment(text.into()));
        }
        for seg in rest.split('/') {
            if seg.is_empty() {
                return Err(PathError::EmptySegment(text.into()));
            }
            if !valid_segment(seg) {
                return Err(PathError::InvalidSegment(seg.into()));
            }
            if seg == "." || seg == ".." {
                return Err(PathError::Reserved(seg.into()));
            }
        }
        Ok(LogicalPath(text.into()))
    }

    /// `/username`
    pub fn user_root(username: &str) -> Self {
        LogicalPath(alloc::format!("/{username}"))
    }

    /// `/username/ag_data`
    pub fn data_root(username: &str) -> Self {
        LogicalPath(alloc::format!("/{username}/{DATA_ROOT}"))
    }

    /// `/username/ag_data/public_data`
    pub fn public_data_root(username: &str) -> Self {
        LogicalPath(alloc::format!("/{username}/{DATA_ROOT}/{PUBLIC_DATA}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0[1..].split('/')
    }

    pub fn depth(&self) -> usize {
        self.segments().count()
    }

    pub fn owner(&self) -> &str {
        self.segments().next().unwrap_or_default()
    }

    pub fn file_name(&self) -> &str {
        self.0.rsplit('/').next().unwrap_or_default()
    }

    /// Parent path, or `None` for a user root.
    pub fn parent(&self) -> Option<LogicalPath> {
        let cut = self.0.rfind('/')?;
        (cut > 0).then(|| LogicalPath(self.0[..cut].into()))
    }

    pub fn join(&self, segment: &str) -> Result<LogicalPath, PathError> {
        LogicalPath::parse(&alloc::format!("{}/{}", self.0, segment))
    }

    /// True if `self` lies strictly below `ancestor`.
    pub fn is_strict_descendant_of(&self, ancestor: &LogicalPath) -> bool {
        self.0.len() > ancestor.0.len()
            && self.0.starts_with(ancestor.as_str())
            && self.0.as_bytes()[ancestor.0.len()] == b'/'
    }

    pub fn is_within(&self, ancestor: &LogicalPath) -> bool {
        self == ancestor || self.is_strict_descendant_of(ancestor)
    }

    /// Replaces the `from` prefix of `self` with `to`.
    pub fn rebase(&self, from: &LogicalPath, to: &LogicalPath) -> Option<LogicalPath> {
        if !self.is_within(from) {
            return None;
        }
        let mut out = String::from(to.as_str());
        out.push_str(&self.0[from.0.len()..]);
        Some(LogicalPath(out))
    }

    /// Segments of `self` below `ancestor`, if it lies within it.
    pub fn relative_to(&self, ancestor: &LogicalPath) -> Option<Vec<&str>> {
        if self == ancestor {
            return Some(Vec::new());
        }
        self.is_strict_descendant_of(ancestor)
            .then(|| self.0[ancestor.0.len() + 1..].split('/').collect())
    }

    /// Lowercased extension of the last segment, or `"none"`.
    pub fn format(&self) -> String {
        let name = self.file_name();
        match name.rfind('.') {
            Some(dot) if dot > 0 && dot + 1 < name.len() => name[dot + 1..].to_ascii_lowercase(),
            _ => "none".into(),
        }
    }
}

impl fmt::Display for LogicalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::str::FromStr for LogicalPath {
    type Err = PathError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LogicalPath::parse(s)
    }
}

impl Serialize for LogicalPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LogicalPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        LogicalPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> LogicalPath {
        LogicalPath::parse(s).unwrap()
    }

    #[test]
    fn rejects_malformed_paths() {
        for bad in ["", "/", "alice", "/alice/", "//x", "/alice/a b", "/alice/../bob", "/alice/ü"] {
            assert!(LogicalPath::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn accepts_documented_example_paths() {
        p("/username/ag_data/green/21_E1801_AI03_index_green.shp");
        p("/alice/ag_data/green/21_E1801_A103_rgba_green.png");
    }

    #[test]
    fn parent_and_owner() {
        let path = p("/alice/ag_data/exp1/a.csv");
        assert_eq!(path.owner(), "alice");
        assert_eq!(path.parent().unwrap(), p("/alice/ag_data/exp1"));
        assert_eq!(p("/alice").parent(), None);
        assert_eq!(path.file_name(), "a.csv");
        assert_eq!(path.depth(), 4);
    }

    #[test]
    fn descendant_checks_respect_segment_boundaries() {
        let a = p("/alice/ag_data/exp");
        assert!(p("/alice/ag_data/exp/x").is_strict_descendant_of(&a));
        assert!(!p("/alice/ag_data/exp1").is_strict_descendant_of(&a));
        assert!(!a.is_strict_descendant_of(&a));
        assert!(a.is_within(&a));
    }

    #[test]
    fn rebase_moves_subtree_prefix() {
        let from = p("/alice/ag_data/a");
        let to = p("/alice/ag_data/b/c");
        assert_eq!(p("/alice/ag_data/a/x/y").rebase(&from, &to).unwrap(), p("/alice/ag_data/b/c/x/y"));
        assert_eq!(p("/alice/ag_data/ab").rebase(&from, &to), None);
    }

    #[test]
    fn format_is_lowercased_extension() {
        assert_eq!(p("/a/ag_data/X.TIF").format(), "tif");
        assert_eq!(p("/a/ag_data/b.tar.gz").format(), "gz");
        assert_eq!(p("/a/ag_data/exp1").format(), "none");
        assert_eq!(p("/a/ag_data/.hidden").format(), "none");
        assert_eq!(p("/a/ag_data/trailing.").format(), "none");
    }

    #[test]
    fn username_charset() {
        assert!(is_valid_username("alice"));
        assert!(is_valid_username("user_01"));
        assert!(!is_valid_username("Bad Name!"));
        assert!(!is_valid_username("Alice"));
        assert!(!is_valid_username(""));
        assert!(!is_valid_username(&"a".repeat(33)));
    }
}
