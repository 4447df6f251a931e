//! The virtual `/u/ag_data/public_data` folder.
//!
//! Only user `u` can see it. Its children are one folder per other user
//! who owns at least one public entity. Listing such an owner folder
//! yields that owner's topmost public entities (those whose parent is not
//! public), remapped from `/owner/ag_data/rest` to
//! `/u/ag_data/public_data/owner/rest`; deeper virtual paths map onto the
//! real public entities below them. Every public entity of every other
//! user is thus reachable exactly once, and nothing else is.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Catalog, CatalogError, Result};
use crate::id::EntityId;
use crate::meta::{MetadataDoc, Mode, Privilege};
use crate::path::{LogicalPath, DATA_ROOT, PUBLIC_DATA};

pub(super) fn is_virtual(path: &LogicalPath) -> bool {
    let mut segs = path.segments().skip(1);
    segs.next() == Some(DATA_ROOT) && segs.next() == Some(PUBLIC_DATA)
}

enum Target<'a> {
    Root,
    Owner(&'a str),
    Entity(LogicalPath),
}

fn classify<'a>(user: &str, path: &'a LogicalPath) -> Option<Target<'a>> {
    if path.owner() != user {
        return None;
    }
    let rest: Vec<&str> = path.segments().skip(3).collect();
    match rest.as_slice() {
        [] => Some(Target::Root),
        [owner] => Some(Target::Owner(owner)),
        [owner, tail @ ..] => {
            let mut real = String::from(LogicalPath::data_root(owner).as_str());
            for seg in tail {
                real.push('/');
                real.push_str(seg);
            }
            LogicalPath::parse(&real).ok().map(Target::Entity)
        }
    }
}

impl Catalog {
    fn synthetic_folder(path: LogicalPath, owner: &str, privilege: Privilege, at: u64) -> MetadataDoc {
        let mut doc = Self::blank_doc(EntityId::NIL, path, Mode::Data, true, privilege, at);
        doc.owner = owner.into();
        doc
    }

    /// The `public_data` entry shown in the owner's data root listing.
    pub(super) fn public_root_doc(&self, user: &str) -> MetadataDoc {
        let at = self.users.get(user).map_or(0, |u| u.created_at);
        Self::synthetic_folder(LogicalPath::public_data_root(user), user, Privilege::Private, at)
    }

    /// Real path `/owner/ag_data/rest` as seen from `user`'s public-data folder.
    fn remap(user: &str, doc: &MetadataDoc) -> MetadataDoc {
        let data_root = LogicalPath::data_root(&doc.owner);
        let mut out = doc.clone();
        let owner_folder = LogicalPath::public_data_root(user)
            .join(&doc.owner)
            .expect("usernames are valid segments");
        out.path = doc.path.rebase(&data_root, &owner_folder).expect("entities live under their data root");
        out
    }

    fn public_owners(&self, user: &str) -> BTreeSet<&str> {
        self.docs
            .values()
            .filter(|d| d.is_public() && d.owner != user)
            .map(|d| d.owner.as_str())
            .collect()
    }

    fn owner_folder_doc(&self, user: &str, owner: &str) -> Result<MetadataDoc> {
        let path = LogicalPath::public_data_root(user).join(owner)?;
        if owner == user || !self.public_owners(user).contains(owner) {
            return Err(CatalogError::NotFound(path.to_string()));
        }
        match self.doc_at(&LogicalPath::data_root(owner)) {
            Some(root) if root.is_public() => Ok(Self::remap(user, root)),
            _ => {
                let at = self.users.get(owner).map_or(0, |u| u.created_at);
                Ok(Self::synthetic_folder(path, owner, Privilege::Public, at))
            }
        }
    }

    /// The live public entity behind a virtual path.
    pub(super) fn virtual_target(&self, user: &str, path: &LogicalPath) -> Result<&MetadataDoc> {
        let not_found = || CatalogError::NotFound(path.to_string());
        match classify(user, path).ok_or_else(not_found)? {
            Target::Root => Err(not_found()),
            Target::Owner(owner) => self
                .doc_at(&LogicalPath::data_root(owner))
                .filter(|d| d.is_public() && d.owner != user)
                .ok_or_else(not_found),
            Target::Entity(real) => self
                .doc_at(&real)
                .filter(|d| d.is_public() && d.owner != user)
                .ok_or_else(not_found),
        }
    }

    pub(super) fn virtual_metadata(&self, user: &str, path: &LogicalPath) -> Result<MetadataDoc> {
        match classify(user, path).ok_or_else(|| CatalogError::NotFound(path.to_string()))? {
            Target::Root => Ok(self.public_root_doc(user)),
            Target::Owner(owner) => self.owner_folder_doc(user, owner),
            Target::Entity(_) => self.virtual_target(user, path).map(|d| Self::remap(user, d)),
        }
    }

    pub(super) fn virtual_children(&self, user: &str, path: &LogicalPath) -> Result<Vec<MetadataDoc>> {
        let mut out = match classify(user, path).ok_or_else(|| CatalogError::NotFound(path.to_string()))? {
            Target::Root => self
                .public_owners(user)
                .into_iter()
                .map(|owner| self.owner_folder_doc(user, owner))
                .collect::<Result<Vec<_>>>()?,
            Target::Owner(owner) => {
                self.owner_folder_doc(user, owner)?;
                let data_root = LogicalPath::data_root(owner);
                self.descendants(&data_root)
                    .map(|id| &self.docs[&id])
                    .filter(|d| d.is_public())
                    .filter(|d| {
                        let parent = d.path.parent().expect("descendants have parents");
                        parent == data_root || !self.doc_at(&parent).is_some_and(|p| p.is_public())
                    })
                    .map(|d| Self::remap(user, d))
                    .collect()
            }
            Target::Entity(real) => {
                let doc = self.virtual_target(user, path)?;
                if let Some(members) = &doc.members {
                    members
                        .iter()
                        .filter_map(|id| self.docs.get(id))
                        .filter(|d| d.visible_to(user))
                        .cloned()
                        .collect()
                } else if doc.is_folder {
                    let depth = real.depth() + 1;
                    self.descendants(&real)
                        .map(|id| &self.docs[&id])
                        .filter(|d| d.path.depth() == depth && d.is_public())
                        .map(|d| Self::remap(user, d))
                        .collect()
                } else {
                    return Err(CatalogError::NotAFolder(path.clone()));
                }
            }
        };
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}
