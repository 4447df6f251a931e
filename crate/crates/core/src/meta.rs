//! Per-entity metadata records and the patches that edit them.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::id::EntityId;
use crate::path::LogicalPath;

/// The four first-class entity kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Data,
    Tool,
    Model,
    Collection,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Data, Mode::Tool, Mode::Model, Mode::Collection];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Data => "data",
            Mode::Tool => "tool",
            Mode::Model => "model",
            Mode::Collection => "collection",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privilege {
    Public,
    Private,
}

impl Privilege {
    pub fn as_str(self) -> &'static str {
        match self {
            Privilege::Public => "public",
            Privilege::Private => "private",
        }
    }

    pub fn parse(s: &str) -> Option<Privilege> {
        match s {
            "public" => Some(Privilege::Public),
            "private" => Some(Privilege::Private),
            _ => None,
        }
    }
}

/// Closed interval of UTC seconds, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Result<Self, MetaError> {
        if start > end {
            return Err(MetaError::Invalid("time_range start exceeds end".into()));
        }
        Ok(TimeRange { start, end })
    }

    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl Serialize for TimeRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.start, self.end).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TimeRange {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (start, end) = <(i64, i64)>::deserialize(deserializer)?;
        TimeRange::new(start, end).map_err(serde::de::Error::custom)
    }
}

/// Latitude/longitude box in degrees, inclusive on every edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

fn check_lat(v: f64) -> Result<(), MetaError> {
    if v.is_finite() && (-90.0..=90.0).contains(&v) {
        Ok(())
    } else {
        Err(MetaError::Invalid("latitude outside [-90, 90]".into()))
    }
}

fn check_lon(v: f64) -> Result<(), MetaError> {
    if v.is_finite() && (-180.0..=180.0).contains(&v) {
        Ok(())
    } else {
        Err(MetaError::Invalid("longitude outside [-180, 180]".into()))
    }
}

impl BBox {
    pub fn validate(&self) -> Result<(), MetaError> {
        check_lat(self.min_lat)?;
        check_lat(self.max_lat)?;
        check_lon(self.min_lon)?;
        check_lon(self.max_lon)?;
        if self.min_lat > self.max_lat || self.min_lon > self.max_lon {
            return Err(MetaError::Invalid("bbox minimum exceeds maximum".into()));
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
            && self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Geo {
    Point { lat: f64, lon: f64 },
    Bbox(BBox),
}

impl Geo {
    pub fn validate(&self) -> Result<(), MetaError> {
        match self {
            Geo::Point { lat, lon } => {
                check_lat(*lat)?;
                check_lon(*lon)
            }
            Geo::Bbox(b) => b.validate(),
        }
    }

    /// Point inside, or box intersecting, the query box.
    pub fn matches(&self, query: &BBox) -> bool {
        match self {
            Geo::Point { lat, lon } => query.contains(*lat, *lon),
            Geo::Bbox(b) => query.intersects(b),
        }
    }
}

/// The metadata record kept for every entity.
///
/// Content (`size_bytes`, `content_hash`) is fixed at creation; metadata
/// edits go through [`MetaPatch`] and never touch it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataDoc {
    pub entity_id: EntityId,
    pub path: LogicalPath,
    pub mode: Mode,
    pub is_folder: bool,
    pub owner: String,
    pub format: String,
    pub category: String,
    pub labels: BTreeSet<String>,
    pub privilege: Privilege,
    pub realtime: bool,
    pub time_range: Option<TimeRange>,
    pub geo: Option<Geo>,
    pub description: String,
    pub size_bytes: u64,
    pub content_hash: String,
    pub created_at: u64,
    pub updated_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<EntityId>>,
}

impl MetadataDoc {
    pub fn is_public(&self) -> bool {
        self.privilege == Privilege::Public
    }

    pub fn visible_to(&self, user: &str) -> bool {
        self.owner == user || self.is_public()
    }

    pub fn has_content(&self) -> bool {
        !self.is_folder && self.mode != Mode::Collection
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetaError {
    #[error("field {0:?} is immutable")]
    ImmutableField(String),
    #[error("unknown metadata field {0:?}")]
    UnknownField(String),
    #[error("invalid metadata: {0}")]
    Invalid(String),
}

const IMMUTABLE_FIELDS: [&str; 12] = [
    "entity_id",
    "path",
    "mode",
    "is_folder",
    "owner",
    "format",
    "content_hash",
    "size_bytes",
    "created_at",
    "updated_at",
    "members",
    // changed only through set_visibility
    "privilege",
];

/// Edit of the mutable metadata fields. `None` leaves a field untouched;
/// for the optional fields `Some(None)` clears them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaPatch {
    pub category: Option<String>,
    pub labels: Option<BTreeSet<String>>,
    pub description: Option<String>,
    pub realtime: Option<bool>,
    pub time_range: Option<Option<TimeRange>>,
    pub geo: Option<Option<Geo>>,
}

impl MetaPatch {
    pub fn is_empty(&self) -> bool {
        *self == MetaPatch::default()
    }

    /// Parses a JSON object patch, rejecting immutable and unknown fields.
    pub fn from_json(value: &Value) -> Result<Self, MetaError> {
        let obj = value
            .as_object()
            .ok_or_else(|| MetaError::Invalid("patch must be a JSON object".into()))?;
        let mut patch = MetaPatch::default();
        for (key, val) in obj {
            if IMMUTABLE_FIELDS.contains(&key.as_str()) {
                return Err(MetaError::ImmutableField(key.clone()));
            }
            let bad = |what: &str| MetaError::Invalid(alloc::format!("{key}: expected {what}"));
            match key.as_str() {
                "category" => patch.category = Some(val.as_str().ok_or_else(|| bad("string"))?.into()),
                "description" => {
                    patch.description = Some(val.as_str().ok_or_else(|| bad("string"))?.into())
                }
                "realtime" => patch.realtime = Some(val.as_bool().ok_or_else(|| bad("boolean"))?),
                "labels" => {
                    let items = val.as_array().ok_or_else(|| bad("array of strings"))?;
                    let labels = items
                        .iter()
                        .map(|v| v.as_str().map(ToString::to_string))
                        .collect::<Option<BTreeSet<_>>>()
                        .ok_or_else(|| bad("array of strings"))?;
                    patch.labels = Some(labels);
                }
                "time_range" => {
                    patch.time_range = Some(if val.is_null() {
                        None
                    } else {
                        Some(TimeRange::deserialize(val).map_err(|e| MetaError::Invalid(e.to_string()))?)
                    })
                }
                "geo" => {
                    patch.geo = Some(if val.is_null() {
                        None
                    } else {
                        let geo = Geo::deserialize(val).map_err(|e| MetaError::Invalid(e.to_string()))?;
                        geo.validate()?;
                        Some(geo)
                    })
                }
                _ => return Err(MetaError::UnknownField(key.clone())),
            }
        }
        Ok(patch)
    }

    /// Names of the fields this patch sets, in a fixed order.
    pub fn field_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |set: bool, name: &str| {
            if set {
                out.push(name.into())
            }
        };
        push(self.category.is_some(), "category");
        push(self.description.is_some(), "description");
        push(self.geo.is_some(), "geo");
        push(self.labels.is_some(), "labels");
        push(self.realtime.is_some(), "realtime");
        push(self.time_range.is_some(), "time_range");
        out
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        if let Some(Some(g)) = &self.geo {
            g.validate()?;
        }
        if let Some(Some(t)) = &self.time_range {
            TimeRange::new(t.start, t.end)?;
        }
        Ok(())
    }

    pub fn apply(&self, doc: &mut MetadataDoc) {
        if let Some(v) = &self.category {
            doc.category = v.clone();
        }
        if let Some(v) = &self.labels {
            doc.labels = v.clone();
        }
        if let Some(v) = &self.description {
            doc.description = v.clone();
        }
        if let Some(v) = self.realtime {
            doc.realtime = v;
        }
        if let Some(v) = self.time_range {
            doc.time_range = v;
        }
        if let Some(v) = self.geo {
            doc.geo = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn immutable_fields_rejected() {
        for field in ["mode", "format", "owner", "content_hash", "size_bytes", "privilege"] {
            let err = MetaPatch::from_json(&json!({ field: "x" })).unwrap_err();
            assert_eq!(err, MetaError::ImmutableField(field.into()));
        }
    }

    #[test]
    fn unknown_field_rejected() {
        assert_eq!(
            MetaPatch::from_json(&json!({"colour": "red"})).unwrap_err(),
            MetaError::UnknownField("colour".into())
        );
    }

    #[test]
    fn parses_every_mutable_field() {
        let patch = MetaPatch::from_json(&json!({
            "category": "soil",
            "labels": ["maize", "2021"],
            "description": "nitrogen",
            "realtime": true,
            "time_range": [10, 20],
            "geo": {"type": "point", "lat": 40.8, "lon": -96.7},
        }))
        .unwrap();
        assert_eq!(patch.labels.as_ref().unwrap().len(), 2);
        assert_eq!(patch.time_range, Some(Some(TimeRange { start: 10, end: 20 })));
        assert_eq!(patch.geo, Some(Some(Geo::Point { lat: 40.8, lon: -96.7 })));
        assert_eq!(patch.field_names().len(), 6);
    }

    #[test]
    fn null_clears_optional_fields() {
        let patch = MetaPatch::from_json(&json!({"geo": null, "time_range": null})).unwrap();
        assert_eq!(patch.geo, Some(None));
        assert_eq!(patch.time_range, Some(None));
    }

    #[test]
    fn inverted_range_and_out_of_range_geo_rejected() {
        assert!(MetaPatch::from_json(&json!({"time_range": [20, 10]})).is_err());
        assert!(MetaPatch::from_json(&json!({"geo": {"type": "point", "lat": 91.0, "lon": 0.0}})).is_err());
        assert!(MetaPatch::from_json(&json!({"geo": {"type": "bbox", "min_lat": 1.0, "min_lon": 0.0, "max_lat": 0.0, "max_lon": 1.0}})).is_err());
    }

    #[test]
    fn geo_matching() {
        let q = BBox { min_lat: 40.0, min_lon: -97.0, max_lat: 41.0, max_lon: -96.0 };
        assert!(Geo::Point { lat: 40.5, lon: -96.5 }.matches(&q));
        assert!(Geo::Point { lat: 41.0, lon: -96.0 }.matches(&q));
        assert!(!Geo::Point { lat: 42.0, lon: -96.5 }.matches(&q));
        let b = BBox { min_lat: 40.9, min_lon: -96.1, max_lat: 45.0, max_lon: -90.0 };
        assert!(Geo::Bbox(b).matches(&q));
        let far = BBox { min_lat: 10.0, min_lon: 10.0, max_lat: 11.0, max_lon: 11.0 };
        assert!(!Geo::Bbox(far).matches(&q));
    }
}
