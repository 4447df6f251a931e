//! Injected side effects: clock, identifier/key generation, and content bytes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::hash::to_hex;
use crate::id::EntityId;

/// Clock and randomness source for a [`crate::Catalog`].
pub trait Environment: Send + Sync {
    /// Current UTC time in whole seconds.
    fn now(&self) -> u64;
    fn new_id(&mut self) -> EntityId;
    /// 32 random bytes rendered as 64 hex characters.
    fn new_api_key(&mut self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("content store: {0}")]
pub struct StoreError(pub String);

/// Physical content storage keyed by entity id, never by logical path.
pub trait ContentStore: Send + Sync {
    fn put(&mut self, id: EntityId, bytes: &[u8]) -> Result<(), StoreError>;
    fn get(&self, id: EntityId) -> Result<Vec<u8>, StoreError>;
    fn remove(&mut self, id: EntityId) -> Result<(), StoreError>;
}

#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    blobs: BTreeMap<EntityId, Vec<u8>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }
}

impl ContentStore for MemoryStore {
    fn put(&mut self, id: EntityId, bytes: &[u8]) -> Result<(), StoreError> {
        self.blobs.insert(id, bytes.to_vec());
        Ok(())
    }

    fn get(&self, id: EntityId) -> Result<Vec<u8>, StoreError> {
        self.blobs
            .get(&id)
            .cloned()
            .ok_or_else(|| StoreError(alloc::format!("no content for {id}")))
    }

    fn remove(&mut self, id: EntityId) -> Result<(), StoreError> {
        self.blobs.remove(&id);
        Ok(())
    }
}

/// Deterministic environment: a fixed clock advanced by one second per
/// reading, and counter-derived ids and keys. Used for golden outputs and tests.
#[derive(Debug)]
pub struct SequentialEnv {
    clock: core::sync::atomic::AtomicU64,
    counter: u64,
    tick: bool,
}

impl SequentialEnv {
    /// Clock starts at `start` and advances one second per reading.
    pub fn new(start: u64) -> Self {
        SequentialEnv { clock: start.into(), counter: 0, tick: true }
    }

    /// Clock frozen at `start`.
    pub fn frozen(start: u64) -> Self {
        SequentialEnv { clock: start.into(), counter: 0, tick: false }
    }

    /// Continues the id and key sequence after `counter` draws, so a
    /// restarted catalog does not reissue existing ids.
    pub fn skip(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }

    fn next(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }
}

impl Environment for SequentialEnv {
    fn now(&self) -> u64 {
        use core::sync::atomic::Ordering;
        if self.tick {
            self.clock.fetch_add(1, Ordering::Relaxed)
        } else {
            self.clock.load(Ordering::Relaxed)
        }
    }

    fn new_id(&mut self) -> EntityId {
        let n = self.next();
        let mut bytes = [0u8; 16];
        bytes[8..].copy_from_slice(&n.to_be_bytes());
        EntityId::from_random_bytes(bytes)
    }

    fn new_api_key(&mut self) -> String {
        let n = self.next();
        let mut bytes = [0u8; 32];
        bytes[24..].copy_from_slice(&n.to_be_bytes());
        bytes[0] = 0x6b;
        to_hex(&bytes)
    }
}
