//! Core model of the ADMA agricultural data-management service.
//!
//! Everything in this crate is pure, in-memory logic: the logical-path
//! catalog with its separated metadata, the feature-hashing embedder and
//! exact semantic index, the 2D projection of embeddings, the provenance
//! DAG, and the tool/run lifecycle model. Content bytes, wall clock and
//! identifier generation are injected through the [`env`] traits so the
//! crate stays `no_std` (with `alloc`). The `adma` crate layers
//! persistence, sandboxed execution, the HTTP API and the CLI on top.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod canonical;
pub mod catalog;
pub mod embed;
pub mod env;
mod error;
pub mod hash;
pub mod id;
pub mod index;
pub mod meta;
pub mod path;
pub mod projection;
pub mod provenance;
pub mod tool;

pub use catalog::{AuditEntry, Catalog, CatalogError, Change, UserAccount};
pub use embed::{embed_text, metadata_to_text, tokenize, Embedder, Embedding, HashingEmbedder, DIM};
pub use env::{ContentStore, Environment, MemoryStore, SequentialEnv, StoreError};
pub use error::ErrorCode;
pub use id::EntityId;
pub use index::{IndexEntry, IndexError, QueryFilter, SearchHit, SemanticIndex};
pub use meta::{BBox, Geo, MetaPatch, MetadataDoc, Mode, Privilege, TimeRange};
pub use path::LogicalPath;
pub use projection::{project_2d, ProjectionPoint};
pub use provenance::{
    EdgeKind, Operation, PipelineView, ProvEdge, ProvNode, ProvRecord, ProvenanceError,
    ProvenanceGraph,
};
pub use tool::{ArgKind, ArgSpec, RunRecord, RunStatus, ToolError, ToolSpec};
