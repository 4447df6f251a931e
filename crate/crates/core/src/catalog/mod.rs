//! Users, entities, logical paths, metadata, visibility and collections.
//!
//! A [`Catalog`] owns the semantic index and the provenance graph and keeps
//! both in step with every mutation. Content bytes go through the injected
//! [`ContentStore`], always keyed by entity id. Mutations are atomic: all
//! checks run before the first state change. The catalog itself is not
//! synchronized; callers wrap it in a readers-writer lock.

mod public;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, HashingEmbedder};
use crate::env::{ContentStore, Environment, StoreError};
use crate::error::ErrorCode;
use crate::hash::content_hash;
use crate::id::EntityId;
use crate::index::{IndexEntry, IndexError, QueryFilter, SearchHit, SemanticIndex};
use crate::meta::{MetaError, MetaPatch, MetadataDoc, Mode, Privilege};
use crate::path::{is_valid_username, LogicalPath, PathError};
use crate::projection::ProjectionPoint;
use crate::provenance::{EdgeKind, Operation, PipelineView, ProvRecord, ProvenanceError, ProvenanceGraph};
use crate::tool::{ArgSpec, ToolError, ToolSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("invalid username {0:?}")]
    InvalidUsername(String),
    #[error("username {0:?} is taken")]
    DuplicateUsername(String),
    #[error(transparent)]
    InvalidPath(#[from] PathError),
    #[error("{0} already exists")]
    PathConflict(LogicalPath),
    #[error("parent of {0} does not exist")]
    MissingParent(LogicalPath),
    #[error("{0} is not a folder")]
    NotAFolder(LogicalPath),
    #[error("{0} not found")]
    NotFound(String),
    #[error("permission denied on {0}")]
    PermissionDenied(LogicalPath),
    #[error("{0} is reserved")]
    Reserved(LogicalPath),
    #[error("cannot place {dst} inside {src}")]
    Cycle { src: LogicalPath, dst: LogicalPath },
    #[error("{0} is a folder")]
    IsFolder(LogicalPath),
    #[error("{0} has no content")]
    NoContent(LogicalPath),
    #[error("mode {0} is not allowed here")]
    InvalidMode(Mode),
    #[error("{0} is not a collection")]
    NotACollection(LogicalPath),
    #[error("{0} is already a member")]
    DuplicateMember(LogicalPath),
    #[error("a collection cannot contain itself")]
    SelfMember,
    #[error("{0} is not a member")]
    NotAMember(LogicalPath),
    #[error("{0} lies under a public folder")]
    PublicAncestor(LogicalPath),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl CatalogError {
    pub fn code(&self) -> ErrorCode {
        use CatalogError::*;
        match self {
            NotFound(_) | MissingParent(_) => ErrorCode::NotFound,
            PermissionDenied(_) => ErrorCode::Unauthorized,
            DuplicateUsername(_) | PathConflict(_) | Reserved(_) | Cycle { .. } | DuplicateMember(_)
            | SelfMember | PublicAncestor(_) => ErrorCode::Conflict,
            Provenance(ProvenanceError::UnknownEntity(_)) => ErrorCode::NotFound,
            Provenance(ProvenanceError::CycleDetected) => ErrorCode::Conflict,
            Provenance(_) | Store(_) => ErrorCode::Internal,
            Tool(ToolError::AlreadyTerminal(_) | ToolError::InvalidTransition { .. }) => ErrorCode::Conflict,
            InvalidUsername(_) | InvalidPath(_) | NotAFolder(_) | IsFolder(_) | NoContent(_) | InvalidMode(_)
            | NotACollection(_) | NotAMember(_) | Meta(_) | Index(_) | Tool(_) => ErrorCode::BadRequest,
        }
    }
}

type Result<T> = core::result::Result<T, CatalogError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub username: String,
    pub api_key: String,
    pub created_at: u64,
}

/// One metadata-level change, kept apart from provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp: u64,
    pub actor: String,
    pub action: String,
    pub entity_id: EntityId,
    pub path: LogicalPath,
    pub detail: String,
}

/// A record touched by a mutation, for incremental persistence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    User(String),
    Doc(EntityId),
    DocRemoved(EntityId),
    ToolSpec(EntityId),
    ToolSpecRemoved(EntityId),
}

/// A file produced by a tool run, registered by [`Catalog::register_tool_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutput {
    pub path: LogicalPath,
    pub mode: Mode,
    pub bytes: Vec<u8>,
}

/// Everything needed to rebuild a catalog, as persisted.
#[derive(Debug, Clone, Default)]
pub struct CatalogState {
    pub users: Vec<UserAccount>,
    pub docs: Vec<MetadataDoc>,
    pub index: Vec<IndexEntry>,
    pub provenance: Vec<ProvRecord>,
    pub audit: Vec<AuditEntry>,
    pub tool_specs: Vec<ToolSpec>,
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn descendant_bounds(path: &LogicalPath) -> (String, String) {
    // '0' is the byte after '/', so this range holds exactly the strict descendants.
    (alloc::format!("{path}/"), alloc::format!("{path}0"))
}

pub struct Catalog {
    env: Box<dyn Environment>,
    store: Box<dyn ContentStore>,
    users: BTreeMap<String, UserAccount>,
    docs: BTreeMap<EntityId, MetadataDoc>,
    paths: BTreeMap<String, EntityId>,
    index: SemanticIndex,
    provenance: ProvenanceGraph,
    tool_specs: BTreeMap<EntityId, ToolSpec>,
    audit: Vec<AuditEntry>,
    changes: Vec<Change>,
}

impl core::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Catalog")
            .field("users", &self.users.len())
            .field("docs", &self.docs.len())
            .field("index", &self.index)
            .finish()
    }
}

impl Catalog {
    pub fn new(env: Box<dyn Environment>, store: Box<dyn ContentStore>) -> Self {
        Self::with_embedder(env, store, Box::new(HashingEmbedder))
    }

    pub fn with_embedder(env: Box<dyn Environment>, store: Box<dyn ContentStore>, embedder: Box<dyn Embedder>) -> Self {
        Catalog {
            env,
            store,
            users: BTreeMap::new(),
            docs: BTreeMap::new(),
            paths: BTreeMap::new(),
            index: SemanticIndex::new(embedder),
            provenance: ProvenanceGraph::new(),
            tool_specs: BTreeMap::new(),
            audit: Vec::new(),
            changes: Vec::new(),
        }
    }

    /// Rebuilds a catalog from persisted state. Index entries are reused
    /// when present and recomputed for any live entity lacking one.
    pub fn restore(
        env: Box<dyn Environment>,
        store: Box<dyn ContentStore>,
        embedder: Box<dyn Embedder>,
        state: CatalogState,
    ) -> Result<Self> {
        let mut cat = Self::with_embedder(env, store, embedder);
        for user in state.users {
            cat.users.insert(user.username.clone(), user);
        }
        for doc in state.docs {
            if cat.paths.insert(doc.path.as_str().into(), doc.entity_id).is_some() {
                return Err(CatalogError::PathConflict(doc.path));
            }
            cat.docs.insert(doc.entity_id, doc);
        }
        for entry in state.index {
            if cat.docs.contains_key(&entry.entity_id) {
                cat.index.insert_entry(entry);
            }
        }
        let missing: Vec<EntityId> = cat.docs.keys().filter(|id| cat.index.get(**id).is_none()).copied().collect();
        for id in missing {
            cat.index.upsert(&cat.docs[&id]);
        }
        cat.provenance = ProvenanceGraph::replay(state.provenance);
        cat.audit = state.audit;
        for spec in state.tool_specs {
            if cat.docs.contains_key(&spec.tool_entity) {
                cat.tool_specs.insert(spec.tool_entity, spec);
            }
        }
        Ok(cat)
    }

    // ---- accessors ----

    pub fn users(&self) -> impl Iterator<Item = &UserAccount> {
        self.users.values()
    }

    pub fn user(&self, name: &str) -> Option<&UserAccount> {
        self.users.get(name)
    }

    pub fn docs(&self) -> impl Iterator<Item = &MetadataDoc> {
        self.docs.values()
    }

    pub fn doc(&self, id: EntityId) -> Option<&MetadataDoc> {
        self.docs.get(&id)
    }

    pub fn doc_at(&self, path: &LogicalPath) -> Option<&MetadataDoc> {
        self.paths.get(path.as_str()).and_then(|id| self.docs.get(id))
    }

    pub fn index(&self) -> &SemanticIndex {
        &self.index
    }

    pub fn provenance(&self) -> &ProvenanceGraph {
        &self.provenance
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn tool_specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tool_specs.values()
    }

    pub fn store(&self) -> &dyn ContentStore {
        self.store.as_ref()
    }

    pub fn now(&self) -> u64 {
        self.env.now()
    }

    /// Drains the records touched since the last call.
    pub fn take_changes(&mut self) -> Vec<Change> {
        core::mem::take(&mut self.changes)
    }

    /// Resolves an API key to its user. Every stored key is compared in
    /// constant time, so the lookup does not reveal which prefix matched.
    pub fn authenticate(&self, key: &str) -> Option<&str> {
        let mut found = None;
        for user in self.users.values() {
            if ct_eq(user.api_key.as_bytes(), key.as_bytes()) {
                found = Some(user.username.as_str());
            }
        }
        found
    }

    // ---- internal helpers ----

    fn fresh_id(&mut self) -> EntityId {
        loop {
            let id = self.env.new_id();
            if !id.is_nil() && !self.docs.contains_key(&id) && !self.provenance.contains(id) {
                return id;
            }
        }
    }

    fn descendants(&self, path: &LogicalPath) -> impl Iterator<Item = EntityId> + '_ {
        use core::ops::Bound;
        let (lo, hi) = descendant_bounds(path);
        self.paths
            .range::<str, _>((Bound::Included(lo.as_str()), Bound::Excluded(hi.as_str())))
            .map(|(_, id)| *id)
            .collect::<Vec<_>>()
            .into_iter()
    }

    /// The entity at `root` followed by its descendants in path order.
    fn subtree(&self, root: EntityId) -> Vec<EntityId> {
        let mut ids = Vec::from([root]);
        ids.extend(self.descendants(&self.docs[&root].path));
        ids
    }

    fn insert_doc(&mut self, doc: MetadataDoc) {
        self.paths.insert(doc.path.as_str().into(), doc.entity_id);
        self.index.upsert(&doc);
        self.changes.push(Change::Doc(doc.entity_id));
        self.docs.insert(doc.entity_id, doc);
    }

    fn reindex(&mut self, id: EntityId) {
        if let Some(doc) = self.docs.get(&id) {
            self.index.upsert(doc);
            self.changes.push(Change::Doc(id));
        }
    }

    fn record_audit(&mut self, actor: &str, action: &str, id: EntityId, detail: String, now: u64) {
        let path = self.docs[&id].path.clone();
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64,
            timestamp: now,
            actor: actor.into(),
            action: action.into(),
            entity_id: id,
            path,
            detail,
        });
    }

    fn blank_doc(id: EntityId, path: LogicalPath, mode: Mode, is_folder: bool, privilege: Privilege, now: u64) -> MetadataDoc {
        MetadataDoc {
            entity_id: id,
            owner: path.owner().into(),
            format: if is_folder { "none".into() } else { path.format() },
            path,
            mode,
            is_folder,
            category: String::new(),
            labels: BTreeSet::new(),
            privilege,
            realtime: false,
            time_range: None,
            geo: None,
            description: String::new(),
            size_bytes: 0,
            content_hash: String::new(),
            created_at: now,
            updated_at: now,
            members: None,
        }
    }

    /// A live entity visible to `user`, addressed by real path. Invisible
    /// entities are reported exactly like absent ones.
    fn visible_real(&self, user: &str, path: &LogicalPath) -> Result<&MetadataDoc> {
        self.doc_at(path)
            .filter(|d| d.visible_to(user))
            .ok_or_else(|| CatalogError::NotFound(path.to_string()))
    }

    /// A live entity owned by `actor`. Visible entities of other users are
    /// permission errors; invisible ones are not-found.
    fn owned(&self, actor: &str, path: &LogicalPath) -> Result<EntityId> {
        let doc = self.visible_real(actor, path)?;
        if doc.owner != actor {
            return Err(CatalogError::PermissionDenied(path.clone()));
        }
        Ok(doc.entity_id)
    }

    fn owned_mutable(&self, actor: &str, path: &LogicalPath) -> Result<EntityId> {
        let id = self.owned(actor, path)?;
        if *path == LogicalPath::data_root(actor) {
            return Err(CatalogError::Reserved(path.clone()));
        }
        Ok(id)
    }

    /// Checks that `actor` may create an entity at `path` and returns the
    /// privilege it inherits from its parent folder.
    pub fn check_creatable(&self, actor: &str, path: &LogicalPath) -> Result<Privilege> {
        if path.owner() != actor || !self.users.contains_key(actor) {
            return Err(CatalogError::PermissionDenied(path.clone()));
        }
        if path.is_within(&LogicalPath::public_data_root(actor)) {
            return Err(CatalogError::Reserved(path.clone()));
        }
        if self.paths.contains_key(path.as_str()) {
            return Err(CatalogError::PathConflict(path.clone()));
        }
        let parent_path = path.parent().ok_or_else(|| CatalogError::MissingParent(path.clone()))?;
        let parent = self.doc_at(&parent_path).ok_or_else(|| CatalogError::MissingParent(path.clone()))?;
        if !parent.is_folder {
            return Err(CatalogError::NotAFolder(parent_path));
        }
        Ok(parent.privilege)
    }

    fn record(&mut self, op: Operation) -> Result<u64> {
        Ok(self.provenance.record_operation(op)?)
    }

    // ---- users ----

    pub fn create_user(&mut self, username: &str) -> Result<UserAccount> {
        if !is_valid_username(username) {
            return Err(CatalogError::InvalidUsername(username.into()));
        }
        if self.users.contains_key(username) {
            return Err(CatalogError::DuplicateUsername(username.into()));
        }
        let api_key = loop {
            let key = self.env.new_api_key();
            if self.authenticate(&key).is_none() {
                break key;
            }
        };
        let now = self.env.now();
        let account = UserAccount { username: username.into(), api_key, created_at: now };
        let id = self.fresh_id();
        let root = LogicalPath::data_root(username);
        self.provenance.add_node(id, &root)?;
        self.record(Operation::new(EdgeKind::Create, username, now).outputs([id]).note("null"))?;
        self.insert_doc(Self::blank_doc(id, root, Mode::Data, true, Privilege::Private, now));
        self.users.insert(username.into(), account.clone());
        self.changes.push(Change::User(username.into()));
        Ok(account)
    }

    // ---- entity creation ----

    pub fn upload(&mut self, actor: &str, path: &LogicalPath, mode: Mode, bytes: &[u8], patch: &MetaPatch) -> Result<EntityId> {
        if mode == Mode::Collection {
            return Err(CatalogError::InvalidMode(mode));
        }
        patch.validate()?;
        let privilege = self.check_creatable(actor, path)?;
        let now = self.env.now();
        let id = self.fresh_id();
        self.store.put(id, bytes)?;
        let mut doc = Self::blank_doc(id, path.clone(), mode, false, privilege, now);
        doc.size_bytes = bytes.len() as u64;
        doc.content_hash = content_hash(bytes);
        patch.apply(&mut doc);
        self.provenance.add_node(id, path)?;
        self.record(Operation::new(EdgeKind::Upload, actor, now).outputs([id]).note("external"))?;
        self.insert_doc(doc);
        Ok(id)
    }

    /// Creates an empty folder of mode data, tool or model.
    pub fn create_folder(&mut self, actor: &str, path: &LogicalPath, mode: Mode) -> Result<EntityId> {
        if mode == Mode::Collection {
            return Err(CatalogError::InvalidMode(mode));
        }
        let privilege = self.check_creatable(actor, path)?;
        let now = self.env.now();
        let id = self.fresh_id();
        self.provenance.add_node(id, path)?;
        self.record(Operation::new(EdgeKind::Create, actor, now).outputs([id]).note("null"))?;
        self.insert_doc(Self::blank_doc(id, path.clone(), mode, true, privilege, now));
        Ok(id)
    }

    pub fn create_collection(&mut self, actor: &str, path: &LogicalPath, patch: &MetaPatch) -> Result<EntityId> {
        patch.validate()?;
        let privilege = self.check_creatable(actor, path)?;
        let now = self.env.now();
        let id = self.fresh_id();
        let mut doc = Self::blank_doc(id, path.clone(), Mode::Collection, false, privilege, now);
        doc.members = Some(Vec::new());
        patch.apply(&mut doc);
        self.provenance.add_node(id, path)?;
        self.record(Operation::new(EdgeKind::Create, actor, now).outputs([id]).note("null"))?;
        self.insert_doc(doc);
        Ok(id)
    }

    // ---- reads ----

    /// Metadata of a visible entity, or of a virtual public-data entry.
    pub fn get_metadata(&self, user: &str, path: &LogicalPath) -> Result<MetadataDoc> {
        if public::is_virtual(path) {
            return self.virtual_metadata(user, path);
        }
        self.visible_real(user, path).cloned()
    }

    /// Resolves a path, real or under the requester's public-data folder,
    /// to the live entity behind it.
    pub fn resolve(&self, user: &str, path: &LogicalPath) -> Result<&MetadataDoc> {
        if public::is_virtual(path) {
            return self.virtual_target(user, path);
        }
        self.visible_real(user, path)
    }

    pub fn read_content(&self, user: &str, path: &LogicalPath) -> Result<Vec<u8>> {
        let doc = self.resolve(user, path)?;
        if doc.is_folder {
            return Err(CatalogError::IsFolder(path.clone()));
        }
        if !doc.has_content() {
            return Err(CatalogError::NoContent(path.clone()));
        }
        Ok(self.store.get(doc.entity_id)?)
    }

    /// Children of a folder sorted by path, or the visible members of a
    /// collection. The owner's data root gains the virtual public-data entry.
    pub fn list_children(&self, user: &str, path: &LogicalPath) -> Result<Vec<MetadataDoc>> {
        if public::is_virtual(path) {
            return self.virtual_children(user, path);
        }
        let doc = self.visible_real(user, path)?;
        let mut out: Vec<MetadataDoc> = if let Some(members) = &doc.members {
            let mut m: Vec<MetadataDoc> =
                members.iter().filter_map(|id| self.docs.get(id)).filter(|d| d.visible_to(user)).cloned().collect();
            m.sort_by(|a, b| a.path.cmp(&b.path));
            m
        } else if doc.is_folder {
            let depth = path.depth() + 1;
            self.descendants(path)
                .map(|id| &self.docs[&id])
                .filter(|d| d.path.depth() == depth && d.visible_to(user))
                .cloned()
                .collect()
        } else {
            return Err(CatalogError::NotAFolder(path.clone()));
        };
        if *path == LogicalPath::data_root(user) {
            out.push(self.public_root_doc(user));
            out.sort_by(|a, b| a.path.cmp(&b.path));
        }
        Ok(out)
    }

    // ---- metadata ----

    pub fn update_metadata(&mut self, actor: &str, path: &LogicalPath, patch: &MetaPatch) -> Result<MetadataDoc> {
        patch.validate()?;
        let id = self.owned(actor, path)?;
        let now = self.env.now();
        let doc = self.docs.get_mut(&id).expect("owned entity is live");
        patch.apply(doc);
        doc.updated_at = doc.updated_at.max(now);
        let detail = patch.field_names().join(",");
        self.reindex(id);
        self.record_audit(actor, "update_metadata", id, detail, now);
        Ok(self.docs[&id].clone())
    }

    /// Applies `privilege` to the entity and every descendant; returns the
    /// paths of the whole subtree in order. An entity below a public folder
    /// cannot be made private on its own.
    pub fn set_visibility(&mut self, actor: &str, path: &LogicalPath, privilege: Privilege) -> Result<Vec<LogicalPath>> {
        let id = self.owned(actor, path)?;
        if privilege == Privilege::Private {
            if let Some(parent) = path.parent().and_then(|p| self.doc_at(&p)) {
                if parent.is_public() {
                    return Err(CatalogError::PublicAncestor(path.clone()));
                }
            }
        }
        let now = self.env.now();
        let ids = self.subtree(id);
        let mut affected = Vec::with_capacity(ids.len());
        for sid in ids {
            let doc = self.docs.get_mut(&sid).expect("subtree ids are live");
            affected.push(doc.path.clone());
            if doc.privilege != privilege {
                doc.privilege = privilege;
                doc.updated_at = doc.updated_at.max(now);
                self.reindex(sid);
            }
        }
        self.record_audit(actor, "set_visibility", id, privilege.as_str().into(), now);
        Ok(affected)
    }

    // ---- structural mutations ----

    /// Removes the entity and its descendants. Provenance nodes are kept
    /// and flagged deleted. Returns the removed ids, root first.
    pub fn delete(&mut self, actor: &str, path: &LogicalPath) -> Result<Vec<EntityId>> {
        let id = self.owned_mutable(actor, path)?;
        let now = self.env.now();
        let ids = self.subtree(id);
        let gone: BTreeSet<EntityId> = ids.iter().copied().collect();
        for sid in &ids {
            let doc = self.docs.remove(sid).expect("subtree ids are live");
            self.paths.remove(doc.path.as_str());
            self.index.remove(*sid);
            if self.tool_specs.remove(sid).is_some() {
                self.changes.push(Change::ToolSpecRemoved(*sid));
            }
            if doc.has_content() {
                // The entity is gone either way; a leftover blob is unreachable.
                let _ = self.store.remove(*sid);
            }
            self.provenance.mark_deleted(*sid, now)?;
            self.changes.push(Change::DocRemoved(*sid));
        }
        let holders: Vec<EntityId> = self
            .docs
            .values()
            .filter(|d| d.members.as_ref().is_some_and(|m| m.iter().any(|x| gone.contains(x))))
            .map(|d| d.entity_id)
            .collect();
        for cid in holders {
            let doc = self.docs.get_mut(&cid).expect("collection is live");
            if let Some(m) = doc.members.as_mut() {
                m.retain(|x| !gone.contains(x));
            }
            doc.updated_at = doc.updated_at.max(now);
            self.reindex(cid);
        }
        Ok(ids)
    }

    /// Moves an entity and its subtree, keeping every id. Moving into a
    /// public folder publishes the moved subtree.
    pub fn move_entity(&mut self, actor: &str, src: &LogicalPath, dst: &LogicalPath) -> Result<MetadataDoc> {
        let id = self.owned_mutable(actor, src)?;
        if dst.is_strict_descendant_of(src) {
            return Err(CatalogError::Cycle { src: src.clone(), dst: dst.clone() });
        }
        let parent_privilege = self.check_creatable(actor, dst)?;
        let now = self.env.now();
        let ids = self.subtree(id);
        for sid in &ids {
            let mut doc = self.docs.remove(sid).expect("subtree ids are live");
            self.paths.remove(doc.path.as_str());
            doc.path = doc.path.rebase(src, dst).expect("subtree lies within src");
            doc.updated_at = doc.updated_at.max(now);
            if parent_privilege == Privilege::Public {
                doc.privilege = Privilege::Public;
            }
            self.insert_doc(doc);
        }
        self.record(
            Operation::new(EdgeKind::Move, actor, now)
                .inputs([id])
                .outputs([id])
                .args(alloc::format!("{src} -> {dst}")),
        )?;
        Ok(self.docs[&id].clone())
    }

    /// Copies a visible entity (and its subtree) to `dst` under fresh ids.
    /// Copies are private unless the destination folder is public. One copy
    /// edge links each source entity to its copy.
    pub fn copy_entity(&mut self, actor: &str, src: &LogicalPath, dst: &LogicalPath) -> Result<EntityId> {
        let root = self.resolve(actor, src)?;
        let (root_id, real_src) = (root.entity_id, root.path.clone());
        if dst.is_within(&real_src) {
            return Err(CatalogError::Cycle { src: src.clone(), dst: dst.clone() });
        }
        let privilege = self.check_creatable(actor, dst)?;
        let now = self.env.now();
        let sources = self.subtree(root_id);
        let mut plan = Vec::with_capacity(sources.len());
        for sid in &sources {
            let new_id = self.fresh_id();
            plan.push((*sid, new_id));
        }
        let mut stored = Vec::new();
        for (sid, new_id) in &plan {
            if self.docs[sid].has_content() {
                let put = self.store.get(*sid).and_then(|bytes| self.store.put(*new_id, &bytes));
                if let Err(e) = put {
                    for done in stored {
                        let _ = self.store.remove(done);
                    }
                    return Err(e.into());
                }
                stored.push(*new_id);
            }
        }
        for (sid, new_id) in plan {
            let source = &self.docs[&sid];
            let mut doc = source.clone();
            doc.entity_id = new_id;
            doc.path = source.path.rebase(&real_src, dst).expect("subtree lies within src");
            doc.owner = actor.into();
            doc.privilege = privilege;
            doc.created_at = now;
            doc.updated_at = now;
            if let Some(m) = doc.members.as_mut() {
                m.retain(|x| self.docs.get(x).is_some_and(|d| d.visible_to(actor)));
            }
            self.provenance.add_node(new_id, &doc.path)?;
            self.record(Operation::new(EdgeKind::Copy, actor, now).inputs([sid]).outputs([new_id]))?;
            self.insert_doc(doc);
        }
        Ok(self.paths[dst.as_str()])
    }

    // ---- collections ----

    fn owned_collection(&self, actor: &str, path: &LogicalPath) -> Result<EntityId> {
        let id = self.owned(actor, path)?;
        if self.docs[&id].members.is_none() {
            return Err(CatalogError::NotACollection(path.clone()));
        }
        Ok(id)
    }

    pub fn add_member(&mut self, actor: &str, collection: &LogicalPath, member: &LogicalPath) -> Result<MetadataDoc> {
        let cid = self.owned_collection(actor, collection)?;
        let mid = self.resolve(actor, member)?.entity_id;
        if mid == cid {
            return Err(CatalogError::SelfMember);
        }
        if self.docs[&cid].members.as_ref().is_some_and(|m| m.contains(&mid)) {
            return Err(CatalogError::DuplicateMember(member.clone()));
        }
        let now = self.env.now();
        let doc = self.docs.get_mut(&cid).expect("collection is live");
        doc.members.get_or_insert_with(Vec::new).push(mid);
        doc.updated_at = doc.updated_at.max(now);
        self.reindex(cid);
        self.record_audit(actor, "add_member", cid, mid.to_string(), now);
        Ok(self.docs[&cid].clone())
    }

    pub fn remove_member(&mut self, actor: &str, collection: &LogicalPath, member: &LogicalPath) -> Result<MetadataDoc> {
        let cid = self.owned_collection(actor, collection)?;
        let mid = self.resolve(actor, member)?.entity_id;
        let doc = self.docs.get_mut(&cid).expect("collection is live");
        let members = doc.members.get_or_insert_with(Vec::new);
        let Some(pos) = members.iter().position(|m| *m == mid) else {
            return Err(CatalogError::NotAMember(member.clone()));
        };
        members.remove(pos);
        let now = self.env.now();
        let doc = self.docs.get_mut(&cid).expect("collection is live");
        doc.updated_at = doc.updated_at.max(now);
        self.reindex(cid);
        self.record_audit(actor, "remove_member", cid, mid.to_string(), now);
        Ok(self.docs[&cid].clone())
    }

    // ---- search ----

    pub fn search(&self, user: &str, query: &str, filter: &QueryFilter, k: usize) -> Result<Vec<SearchHit>> {
        Ok(self.index.search(query, filter, k, user)?)
    }

    /// 2D projection of visible entities' embeddings.
    pub fn project(&self, user: &str, ids: &[EntityId]) -> Result<Vec<ProjectionPoint>> {
        for id in ids {
            if !self.docs.get(id).is_some_and(|d| d.visible_to(user)) {
                return Err(CatalogError::NotFound(id.to_string()));
            }
        }
        Ok(self.index.project(ids)?)
    }

    // ---- provenance ----

    fn visible_node(&self, user: &str, id: EntityId) -> Result<EntityId> {
        let live = self.docs.get(&id).map(|d| d.visible_to(user));
        let created_by_user = self.provenance.node(id).is_some_and(|n| n.path_at_creation.owner() == user);
        match live {
            Some(true) => Ok(id),
            None if created_by_user => Ok(id),
            _ => Err(CatalogError::NotFound(id.to_string())),
        }
    }

    pub fn pipeline_of(&self, user: &str, path: &LogicalPath, depth: usize) -> Result<PipelineView> {
        let id = self.resolve(user, path)?.entity_id;
        Ok(self.provenance.pipeline_of(id, depth)?)
    }

    /// Pipeline by id; also reaches deleted entities the user created.
    pub fn pipeline_by_id(&self, user: &str, id: EntityId, depth: usize) -> Result<PipelineView> {
        let id = self.visible_node(user, id)?;
        Ok(self.provenance.pipeline_of(id, depth)?)
    }

    pub fn upstream(&self, user: &str, path: &LogicalPath) -> Result<Vec<EntityId>> {
        let id = self.resolve(user, path)?.entity_id;
        Ok(self.provenance.upstream(id)?)
    }

    pub fn downstream(&self, user: &str, path: &LogicalPath) -> Result<Vec<EntityId>> {
        let id = self.resolve(user, path)?.entity_id;
        Ok(self.provenance.downstream(id)?)
    }

    // ---- tools ----

    /// A tool file, or a file inside a model folder (an inference entrypoint).
    pub fn is_runnable(&self, doc: &MetadataDoc) -> bool {
        if doc.is_folder || doc.mode == Mode::Collection {
            return false;
        }
        if doc.mode == Mode::Tool {
            return true;
        }
        let mut cur = doc.path.parent();
        while let Some(p) = cur {
            if self.doc_at(&p).is_some_and(|d| d.is_folder && d.mode == Mode::Model) {
                return true;
            }
            cur = p.parent();
        }
        false
    }

    /// A visible runnable entity.
    pub fn runnable(&self, user: &str, path: &LogicalPath) -> Result<&MetadataDoc> {
        let doc = self.resolve(user, path)?;
        if !self.is_runnable(doc) {
            return Err(ToolError::NotATool.into());
        }
        Ok(doc)
    }

    pub fn set_tool_spec(&mut self, actor: &str, path: &LogicalPath, profile: &str, argspec: Vec<ArgSpec>) -> Result<ToolSpec> {
        let id = self.owned(actor, path)?;
        if !self.is_runnable(&self.docs[&id]) {
            return Err(ToolError::NotATool.into());
        }
        let spec = ToolSpec { tool_entity: id, executor_profile: profile.into(), argspec };
        spec.validate()?;
        self.tool_specs.insert(id, spec.clone());
        self.changes.push(Change::ToolSpec(id));
        Ok(spec)
    }

    pub fn tool_spec(&self, user: &str, path: &LogicalPath) -> Result<Option<&ToolSpec>> {
        let doc = self.runnable(user, path)?;
        Ok(self.tool_specs.get(&doc.entity_id))
    }

    /// Registers the outputs of a successful run in one step: content,
    /// metadata, index entries and a single tool_run edge from `inputs`
    /// through `tool` to the new entities, noted with `run_id`. Nothing
    /// changes on error.
    pub fn register_tool_outputs(
        &mut self,
        actor: &str,
        tool: EntityId,
        inputs: &[EntityId],
        args: &str,
        run_id: &str,
        outputs: Vec<ToolOutput>,
    ) -> Result<(Vec<EntityId>, u64)> {
        for id in inputs.iter().chain([&tool]) {
            if !self.provenance.contains(*id) {
                return Err(ProvenanceError::UnknownEntity(*id).into());
            }
        }
        let mut privileges = Vec::with_capacity(outputs.len());
        let mut seen = BTreeSet::new();
        for out in &outputs {
            if out.mode == Mode::Collection {
                return Err(CatalogError::InvalidMode(out.mode));
            }
            if !seen.insert(out.path.as_str()) {
                return Err(CatalogError::PathConflict(out.path.clone()));
            }
            privileges.push(self.check_creatable(actor, &out.path)?);
        }
        let mut unique_inputs = Vec::new();
        for id in inputs {
            if !unique_inputs.contains(id) {
                unique_inputs.push(*id);
            }
        }
        let now = self.env.now();
        let ids: Vec<EntityId> = outputs.iter().map(|_| self.fresh_id()).collect();
        for (i, (out, id)) in outputs.iter().zip(&ids).enumerate() {
            if let Err(e) = self.store.put(*id, &out.bytes) {
                for done in &ids[..i] {
                    let _ = self.store.remove(*done);
                }
                return Err(e.into());
            }
        }
        for (id, out) in ids.iter().zip(&outputs) {
            self.provenance.add_node(*id, &out.path)?;
        }
        let edge_id = self.record(
            Operation::new(EdgeKind::ToolRun, actor, now)
                .inputs(unique_inputs)
                .outputs(ids.iter().copied())
                .tool(tool)
                .args(args)
                .note(run_id),
        )?;
        for ((out, id), privilege) in outputs.into_iter().zip(&ids).zip(privileges) {
            let mut doc = Self::blank_doc(*id, out.path, out.mode, false, privilege, now);
            doc.size_bytes = out.bytes.len() as u64;
            doc.content_hash = content_hash(&out.bytes);
            self.insert_doc(doc);
        }
        Ok((ids, edge_id))
    }
}
