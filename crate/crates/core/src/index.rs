//! Exact semantic index over metadata embeddings.
//!
//! One `(vector, facet record)` pair per live entity. Queries filter the
//! whole corpus by visibility and the conjunctive facet filter, score by
//! dot product of unit vectors, and rank by similarity descending with
//! ties broken by path ascending. No approximation anywhere.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embed::{metadata_to_text, Embedder, Embedding, HashingEmbedder};
use crate::id::EntityId;
use crate::meta::{BBox, Geo, MetadataDoc, Mode, Privilege, TimeRange};
use crate::path::LogicalPath;
use crate::projection::{project_2d, ProjectionPoint};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("entity {0} is not indexed")]
    UnknownEntity(EntityId),
}

/// The searchable facets of one entity, copied from its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetRecord {
    pub path: LogicalPath,
    pub mode: Mode,
    pub owner: String,
    pub format: String,
    pub category: String,
    pub labels: BTreeSet<String>,
    pub privilege: Privilege,
    pub realtime: bool,
    pub time_range: Option<TimeRange>,
    pub geo: Option<Geo>,
}

impl From<&MetadataDoc> for FacetRecord {
    fn from(doc: &MetadataDoc) -> Self {
        FacetRecord {
            path: doc.path.clone(),
            mode: doc.mode,
            owner: doc.owner.clone(),
            format: doc.format.clone(),
            category: doc.category.clone(),
            labels: doc.labels.clone(),
            privilege: doc.privilege,
            realtime: doc.realtime,
            time_range: doc.time_range,
            geo: doc.geo,
        }
    }
}

impl FacetRecord {
    pub fn visible_to(&self, user: &str) -> bool {
        self.owner == user || self.privilege == Privilege::Public
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub entity_id: EntityId,
    pub vector: Embedding,
    pub facets: FacetRecord,
}

/// Conjunction of optional facet constraints.
///
/// Labels match when the candidate's label set intersects the requested
/// set (an empty requested set constrains nothing); time ranges match on
/// interval overlap; the box matches a contained point or an intersecting
/// box. Candidates lacking a constrained field never match it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privilege: Option<Privilege>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realtime: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_range: Option<TimeRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_bbox: Option<BBox>,
}

impl QueryFilter {
    pub fn validate(&self) -> Result<(), IndexError> {
        if let Some(t) = &self.time_range {
            if t.start > t.end {
                return Err(IndexError::InvalidFilter("time range start exceeds end".into()));
            }
        }
        if let Some(b) = &self.spatial_bbox {
            b.validate()
                .map_err(|e| IndexError::InvalidFilter(alloc::format!("{e}")))?;
        }
        Ok(())
    }

    pub fn matches(&self, f: &FacetRecord) -> bool {
        if self.mode.is_some_and(|m| m != f.mode) {
            return false;
        }
        if self.format.as_ref().is_some_and(|v| *v != f.format) {
            return false;
        }
        if self.category.as_ref().is_some_and(|v| *v != f.category) {
            return false;
        }
        if let Some(wanted) = &self.labels {
            if !wanted.is_empty() && wanted.is_disjoint(&f.labels) {
                return false;
            }
        }
        if self.privilege.is_some_and(|p| p != f.privilege) {
            return false;
        }
        if self.realtime.is_some_and(|r| r != f.realtime) {
            return false;
        }
        if let Some(q) = &self.time_range {
            match &f.time_range {
                Some(t) if t.overlaps(q) => {}
                _ => return false,
            }
        }
        if let Some(q) = &self.spatial_bbox {
            match &f.geo {
                Some(g) if g.matches(q) => {}
                _ => return false,
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entity_id: EntityId,
    pub path: LogicalPath,
    pub similarity: f64,
    pub mode: Mode,
}

/// Total ranking order: similarity descending, then path ascending.
pub fn rank_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.similarity
        .partial_cmp(&a.similarity)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.path.cmp(&b.path))
}

pub struct SemanticIndex {
    embedder: Box<dyn Embedder>,
    entries: BTreeMap<EntityId, IndexEntry>,
}

impl Default for SemanticIndex {
    fn default() -> Self {
        SemanticIndex::new(Box::new(HashingEmbedder))
    }
}

impl core::fmt::Debug for SemanticIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SemanticIndex")
            .field("embedder", &self.embedder.name())
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl SemanticIndex {
    pub fn new(embedder: Box<dyn Embedder>) -> Self {
        SemanticIndex { embedder, entries: BTreeMap::new() }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Embeds the doc's metadata text and replaces any previous entry.
    pub fn upsert(&mut self, doc: &MetadataDoc) {
        let vector = self.embedder.embed(&metadata_to_text(doc));
        self.insert_entry(IndexEntry { entity_id: doc.entity_id, vector, facets: doc.into() });
    }

    /// Inserts a precomputed entry (used when reloading a persisted index).
    pub fn insert_entry(&mut self, entry: IndexEntry) {
        self.entries.insert(entry.entity_id, entry);
    }

    /// Idempotent.
    pub fn remove(&mut self, id: EntityId) -> bool {
        self.entries.remove(&id).is_some()
    }

    pub fn get(&self, id: EntityId) -> Option<&IndexEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    pub fn search(
        &self,
        query: &str,
        filter: &QueryFilter,
        k: usize,
        requester: &str,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        filter.validate()?;
        let q = self.embedder.embed(query);
        let mut hits: Vec<SearchHit> = self
            .entries
            .values()
            .filter(|e| e.facets.visible_to(requester) && filter.matches(&e.facets))
            .map(|e| SearchHit {
                entity_id: e.entity_id,
                path: e.facets.path.clone(),
                similarity: q.dot(&e.vector),
                mode: e.facets.mode,
            })
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }

    /// 2D principal-component projection of the given entities' vectors.
    pub fn project(&self, ids: &[EntityId]) -> Result<Vec<ProjectionPoint>, IndexError> {
        let entries = ids
            .iter()
            .map(|id| self.entries.get(id).ok_or(IndexError::UnknownEntity(*id)))
            .collect::<Result<Vec<_>, _>>()?;
        let vectors: Vec<&[f64]> = entries.iter().map(|e| e.vector.as_slice()).collect();
        let coords = project_2d(&vectors);
        Ok(entries
            .iter()
            .zip(coords)
            .map(|(e, (x, y))| ProjectionPoint { entity_id: e.entity_id, x, y, mode: e.facets.mode })
            .collect())
    }
}
