//! On-disk persistence under the data root.
//!
//! ```text
//! <root>/content/<entity-id>   raw bytes, named by id only
//! <root>/users.jsonl           keyed journal of accounts
//! <root>/metadata.jsonl        keyed journal of metadata documents
//! <root>/index.jsonl           keyed journal of index entries (vector + facets)
//! <root>/argspecs.jsonl        keyed journal of tool specs
//! <root>/runs.jsonl            keyed journal of run records
//! <root>/provenance.jsonl      append-only provenance log
//! <root>/audit.jsonl           append-only metadata audit trail
//! <root>/runs/<run-id>/        sandbox directory and log.txt
//! ```
//!
//! Every line is canonical JSON. Keyed journals hold `{"op":"put","value":..}`
//! and `{"op":"delete","key":..}` lines; they are compacted to one put per
//! live key when the store is opened. Append-only logs are never rewritten.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use adma_core::catalog::CatalogState;
use adma_core::hash::to_hex;
use adma_core::{
    canonical, AuditEntry, Catalog, Change, ContentStore, EntityId, Environment, IndexEntry, MetadataDoc, ProvRecord,
    RunRecord, StoreError, ToolSpec, UserAccount,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Wall clock and OS randomness.
#[derive(Debug, Default)]
pub struct SystemEnv;

fn random_bytes<const N: usize>() -> [u8; N] {
    let mut buf = [0u8; N];
    getrandom::getrandom(&mut buf).expect("operating system randomness unavailable");
    buf
}

impl Environment for SystemEnv {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
    }

    fn new_id(&mut self) -> EntityId {
        EntityId::from_random_bytes(random_bytes())
    }

    fn new_api_key(&mut self) -> String {
        to_hex(&random_bytes::<32>())
    }
}

/// Content files under `<root>/content`, written via rename so a reader
/// never sees a partial file.
#[derive(Debug, Clone)]
pub struct FsContentStore {
    dir: PathBuf,
}

impl FsContentStore {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(FsContentStore { dir })
    }

    pub fn path_of(&self, id: EntityId) -> PathBuf {
        self.dir.join(id.to_string())
    }
}

fn store_err(e: io::Error) -> StoreError {
    StoreError(e.to_string())
}

impl ContentStore for FsContentStore {
    fn put(&mut self, id: EntityId, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{id}.tmp"));
        let mut f = File::create(&tmp).map_err(store_err)?;
        f.write_all(bytes).and_then(|_| f.sync_data()).map_err(store_err)?;
        fs::rename(&tmp, self.path_of(id)).map_err(store_err)
    }

    fn get(&self, id: EntityId) -> Result<Vec<u8>, StoreError> {
        fs::read(self.path_of(id)).map_err(store_err)
    }

    fn remove(&mut self, id: EntityId) -> Result<(), StoreError> {
        match fs::remove_file(self.path_of(id)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(store_err(e)),
            _ => Ok(()),
        }
    }
}

fn invalid(path: &Path, line: usize, e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), line + 1))
}

/// Reads JSON lines. A torn final line (no trailing newline, not parseable)
/// is dropped and truncated away; anything else malformed is an error.
fn read_lines<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => f.read_to_string(&mut text)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    let mut consumed = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let complete = line.ends_with('\n');
        match serde_json::from_str(line.trim_end_matches('\n')) {
            Ok(v) => out.push(v),
            Err(_) if !complete => {
                tracing::warn!(file = %path.display(), "dropping torn final record");
                OpenOptions::new().write(true).open(path)?.set_len(consumed as u64)?;
                break;
            }
            Err(e) => return Err(invalid(path, n, e)),
        }
        consumed += line.len();
    }
    if consumed == text.len() && !text.is_empty() && !text.ends_with('\n') {
        // Parseable but unterminated final line: terminate it.
        OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
    }
    Ok(out)
}

fn line<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut bytes = canonical::to_vec(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `contents` to `path` through a temporary file and rename.
pub fn replace_file(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(contents)?;
    f.sync_data()?;
    fs::rename(tmp, path)
}

struct AppendLog {
    file: File,
}

impl AppendLog {
    fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(AppendLog { file })
    }

    fn append<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        self.file.write_all(&line(value)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalLine<T> {
    Put { value: T },
    Delete { key: String },
}

/// A keyed journal: the latest put per key wins, deletes remove.
struct Journal {
    log: AppendLog,
}

impl Journal {
    /// Folds the journal, rewrites it compacted, and returns the live values.
    fn open<T, K>(path: &Path, key: K) -> io::Result<(Self, Vec<T>)>
    where
        T: Serialize + DeserializeOwned,
        K: Fn(&T) -> String,
    {
        let mut live: BTreeMap<String, T> = BTreeMap::new();
        for entry in read_lines::<JournalLine<T>>(path)? {
            match entry {
                JournalLine::Put { value } => {
                    live.insert(key(&value), value);
                }
                JournalLine::Delete { key } => {
                    live.remove(&key);
                }
            }
        }
        let mut compacted = Vec::new();
        for value in live.values() {
            compacted.extend(line(&JournalLine::Put { value })?);
        }
        replace_file(path, &compacted)?;
        Ok((Journal { log: AppendLog::open(path)? }, live.into_values().collect()))
    }

    fn put<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        self.log.append(&JournalLine::Put { value })
    }

    fn delete(&mut self, key: String) -> io::Result<()> {
        self.log.append(&JournalLine::<()>::Delete { key })
    }
}

/// Persisted state read at startup.
#[derive(Debug, Default)]
pub struct Loaded {
    pub state: CatalogState,
    pub runs: Vec<RunRecord>,
}

pub struct DataStore {
    root: PathBuf,
    users: Journal,
    docs: Journal,
    index: Journal,
    specs: Journal,
    runs: Journal,
    provenance: AppendLog,
    audit: AppendLog,
    provenance_written: usize,
    audit_written: usize,
}

impl DataStore {
    pub fn open(root: &Path) -> io::Result<(Self, Loaded)> {
        fs::create_dir_all(root.join("content"))?;
        fs::create_dir_all(root.join("runs"))?;
        let (users, user_list) = Journal::open(&root.join("users.jsonl"), |u: &UserAccount| u.username.clone())?;
        let (docs, doc_list) = Journal::open(&root.join("metadata.jsonl"), |d: &MetadataDoc| d.entity_id.to_string())?;
        let (index, entries) = Journal::open(&root.join("index.jsonl"), |e: &IndexEntry| e.entity_id.to_string())?;
        let (specs, spec_list) = Journal::open(&root.join("argspecs.jsonl"), |s: &ToolSpec| s.tool_entity.to_string())?;
        let (runs, run_list) = Journal::open(&root.join("runs.jsonl"), |r: &RunRecord| r.run_id.clone())?;
        let prov_path = root.join("provenance.jsonl");
        let audit_path = root.join("audit.jsonl");
        let provenance_records: Vec<ProvRecord> = read_lines(&prov_path)?;
        let audit_records: Vec<AuditEntry> = read_lines(&audit_path)?;
        let store = DataStore {
            root: root.into(),
            users,
            docs,
            index,
            specs,
            runs,
            provenance: AppendLog::open(&prov_path)?,
            audit: AppendLog::open(&audit_path)?,
            provenance_written: provenance_records.len(),
            audit_written: audit_records.len(),
        };
        let loaded = Loaded {
            state: CatalogState {
                users: user_list,
                docs: doc_list,
                index: entries,
                provenance: provenance_records,
                audit: audit_records,
                tool_specs: spec_list,
            },
            runs: run_list,
        };
        Ok((store, loaded))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn content_dir(&self) -> PathBuf {
        self.root.join("content")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    /// Writes every record the catalog changed since the last call.
    pub fn persist(&mut self, catalog: &mut Catalog) -> io::Result<()> {
        let mut users = BTreeSet::new();
        let mut docs = BTreeSet::new();
        let mut specs = BTreeSet::new();
        for change in catalog.take_changes() {
            match change {
                Change::User(name) => {
                    users.insert(name);
                }
                Change::Doc(id) | Change::DocRemoved(id) => {
                    docs.insert(id);
                }
                Change::ToolSpec(id) | Change::ToolSpecRemoved(id) => {
                    specs.insert(id);
                }
            }
        }
        for name in users {
            if let Some(u) = catalog.user(&name) {
                self.users.put(u)?;
            }
        }
        for id in docs {
            match (catalog.doc(id), catalog.index().get(id)) {
                (Some(doc), Some(entry)) => {
                    self.docs.put(doc)?;
                    self.index.put(entry)?;
                }
                _ => {
                    self.docs.delete(id.to_string())?;
                    self.index.delete(id.to_string())?;
                }
            }
        }
        for id in specs {
            match catalog.tool_specs().find(|s| s.tool_entity == id) {
                Some(spec) => self.specs.put(spec)?,
                None => self.specs.delete(id.to_string())?,
            }
        }
        let log = catalog.provenance().log();
        for record in &log[self.provenance_written..] {
            self.provenance.append(record)?;
        }
        self.provenance_written = log.len();
        let audit = catalog.audit();
        for entry in &audit[self.audit_written..] {
            self.audit.append(entry)?;
        }
        self.audit_written = audit.len();
        Ok(())
    }

    pub fn put_run(&mut self, run: &RunRecord) -> io::Result<()> {
        self.runs.put(run)
    }
}
