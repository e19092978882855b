//! Durable storage for authorization models and relationship tuples.
//!
//! A store is a directory:
//!
//! ```text
//! LOCK                 held by the single writer process
//! meta                 {"store_id", "name", "revision"}
//! models/<id>.fga.json one file per model version, ids "00000001", ...
//! tuples.log           `<rev> ADD|DEL <tuple>` lines closed by `<rev> COMMIT`
//! ```
//!
//! The log is authoritative. It is replayed and compacted on open;
//! operations without a commit marker are discarded.

mod log;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{has_errors, Diagnostic};
use crate::rebac::{
    export_model, import_model, validate_model, validate_tuple, AuthorizationModel, ModelError, ObjectRef,
    RelationshipTuple, TupleSet, TupleViolation, UserRef,
};
use self::log::Entry;

const LOCK_FILE: &str = "LOCK";
const META_FILE: &str = "meta";
const MODELS_DIR: &str = "models";
const LOG_FILE: &str = "tuples.log";
const MODEL_SUFFIX: &str = ".fga.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store at {0} is locked by another writer")]
    StoreBusy(PathBuf),
    #[error("tuple already present: {0}")]
    DuplicateAdd(String),
    #[error("tuple not present: {0}")]
    AbsentDelete(String),
    #[error("unknown type or relation: {0}")]
    UnknownTypeOrRelation(String),
    #[error("invalid tuple {tuple}: {reason}")]
    InvalidTuple { tuple: String, reason: String },
    #[error("invalid model")]
    InvalidModel(Vec<Diagnostic>),
    #[error("the store has no authorization model")]
    NoModel,
    #[error("no authorization model with id {0}")]
    UnknownModel(String),
    #[error("a write needs at least one tuple")]
    EmptyWrite,
    #[error("store data is corrupt: {0}")]
    Corrupt(String),
    #[error("store is unusable after an interrupted write; reopen it")]
    Poisoned,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Filter for [`StoreState::read`]. Unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadFilter {
    pub object: Option<ObjectRef>,
    pub relation: Option<String>,
    pub user: Option<UserRef>,
}

/// The contents of a store at one revision.
#[derive(Debug, Clone)]
pub struct StoreState {
    pub store_id: String,
    pub name: String,
    pub models: BTreeMap<String, Arc<AuthorizationModel>>,
    pub tuples: TupleSet,
    /// Number of committed tuple writes.
    pub revision: u64,
}

/// Immutable view of one revision, cheap to clone and share.
pub type Snapshot = Arc<StoreState>;

impl StoreState {
    pub fn latest_model(&self) -> Option<(&str, &Arc<AuthorizationModel>)> {
        self.models.iter().next_back().map(|(id, m)| (id.as_str(), m))
    }

    /// The model with `id`, or the latest one when `id` is `None`.
    pub fn model(&self, id: Option<&str>) -> Result<Arc<AuthorizationModel>, StoreError> {
        match id {
            Some(id) => self
                .models
                .get(id)
                .cloned()
                .ok_or_else(|| StoreError::UnknownModel(id.to_string())),
            None => self.latest_model().map(|(_, m)| m.clone()).ok_or(StoreError::NoModel),
        }
    }

    /// Matching tuples in canonical order.
    pub fn read(&self, filter: &ReadFilter) -> Vec<RelationshipTuple> {
        self.tuples
            .iter()
            .filter(|t| filter.object.as_ref().is_none_or(|o| *o == t.object))
            .filter(|t| filter.relation.as_ref().is_none_or(|r| *r == t.relation))
            .filter(|t| filter.user.as_ref().is_none_or(|u| *u == t.user))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    store_id: String,
    name: String,
    revision: u64,
}

/// Where [`Store::write_interrupted`] stops.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// After this many complete operation lines.
    AfterOps(usize),
    /// Midway through the line at this index (operations, then the commit).
    TornLine(usize),
    /// After the commit marker, before the snapshot and meta file update.
    AfterCommit,
}

pub struct Store {
    dir: PathBuf,
    state: RwLock<Snapshot>,
    writer: Mutex<Writer>,
}

struct Writer {
    log: File,
    poisoned: bool,
    _lock: File,
}

impl Store {
    /// Opens the store in `dir`, creating it if needed. A new store is named
    /// after its directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        let dir = dir.as_ref();
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::open_named(dir, &name)
    }

    /// Opens the store in `dir`; `name` is used only when creating it.
    pub fn open_named(dir: impl AsRef<Path>, name: &str) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(MODELS_DIR))?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(StoreError::StoreBusy(dir)),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }

        let meta = match fs::read(dir.join(META_FILE)) {
            Ok(bytes) => serde_json::from_slice::<Meta>(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("meta: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Meta {
                store_id: uuid::Uuid::new_v4().simple().to_string(),
                name: name.to_string(),
                revision: 0,
            },
            Err(e) => return Err(e.into()),
        };

        let models = load_models(&dir.join(MODELS_DIR))?;
        let text = match fs::read_to_string(dir.join(LOG_FILE)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let replayed = log::replay(&text).map_err(StoreError::Corrupt)?;

        replace_file(&dir, LOG_FILE, log::compacted(&replayed.tuples, replayed.revision).as_bytes())?;
        let meta = Meta {
            revision: replayed.revision,
            ..meta
        };
        write_meta(&dir, &meta)?;
        let log = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;

        let state = StoreState {
            store_id: meta.store_id,
            name: meta.name,
            models,
            tuples: replayed.tuples,
            revision: replayed.revision,
        };
        Ok(Store {
            dir,
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(Writer {
                log,
                poisoned: false,
                _lock: lock,
            }),
        })
    }

    /// Creates a new store in `parent/<store id>`.
    pub fn create(parent: impl AsRef<Path>, name: &str) -> Result<Store, StoreError> {
        let store_id = uuid::Uuid::new_v4().simple().to_string();
        let dir = parent.as_ref().join(&store_id);
        fs::create_dir_all(&dir)?;
        write_meta(
            &dir,
            &Meta {
                store_id,
                name: name.to_string(),
                revision: 0,
            },
        )?;
        Self::open_named(dir, name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// The latest committed revision.
    pub fn snapshot(&self) -> Snapshot {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn store_id(&self) -> String {
        self.snapshot().store_id.clone()
    }

    pub fn revision(&self) -> u64 {
        self.snapshot().revision
    }

    pub fn read(&self, filter: &ReadFilter) -> Vec<RelationshipTuple> {
        self.snapshot().read(filter)
    }

    /// Stores a new model version and returns its id.
    pub fn put_model(&self, model: &AuthorizationModel) -> Result<String, StoreError> {
        let diagnostics = validate_model(model);
        if has_errors(&diagnostics) {
            return Err(StoreError::InvalidModel(diagnostics));
        }
        let bytes = export_model(model).map_err(|e| match e {
            ModelError::InvalidModel(d) => StoreError::InvalidModel(d),
            ModelError::MalformedDocument(m) => StoreError::Corrupt(m),
        })?;
        let writer = self.lock_writer()?;
        let current = self.snapshot();
        let next = current.models.keys().next_back().map_or(1, |id| id.parse::<u64>().unwrap_or(0) + 1);
        let id = format!("{next:08}");
        replace_file(&self.dir.join(MODELS_DIR), &format!("{id}{MODEL_SUFFIX}"), &bytes)?;
        let mut state = (*current).clone();
        state.models.insert(id.clone(), Arc::new(model.clone()));
        self.publish(state);
        drop(writer);
        Ok(id)
    }

    /// Applies `deletes` then `adds` atomically and returns the new revision.
    pub fn write(&self, adds: &[RelationshipTuple], deletes: &[RelationshipTuple]) -> Result<u64, StoreError> {
        self.write_inner(adds, deletes, None)
    }

    /// Runs a write that stops at `crash`, leaving the files as a killed
    /// process would. The store is unusable afterwards.
    #[doc(hidden)]
    pub fn write_interrupted(
        &self,
        adds: &[RelationshipTuple],
        deletes: &[RelationshipTuple],
        crash: CrashPoint,
    ) -> Result<u64, StoreError> {
        self.write_inner(adds, deletes, Some(crash))
    }

    fn write_inner(
        &self,
        adds: &[RelationshipTuple],
        deletes: &[RelationshipTuple],
        crash: Option<CrashPoint>,
    ) -> Result<u64, StoreError> {
        if adds.is_empty() && deletes.is_empty() {
            return Err(StoreError::EmptyWrite);
        }
        let mut writer = self.lock_writer()?;
        let current = self.snapshot();
        let (_, model) = current.latest_model().ok_or(StoreError::NoModel)?;
        let check = |t: &RelationshipTuple| {
            validate_tuple(model, t).map_err(|e| match e {
                TupleViolation::UnknownTypeOrRelation(m) => StoreError::UnknownTypeOrRelation(m),
                other => StoreError::InvalidTuple {
                    tuple: t.to_string(),
                    reason: other.to_string(),
                },
            })
        };
        let deletes = deletes.iter().map(check).collect::<Result<Vec<_>, _>>()?;
        let adds = adds.iter().map(check).collect::<Result<Vec<_>, _>>()?;

        let mut tuples = current.tuples.clone();
        for t in &deletes {
            if !tuples.remove(t) {
                return Err(StoreError::AbsentDelete(t.to_string()));
            }
        }
        for t in &adds {
            if !tuples.insert(t.clone()) {
                return Err(StoreError::DuplicateAdd(t.to_string()));
            }
        }

        let revision = current.revision + 1;
        let mut lines: Vec<String> = deletes
            .into_iter()
            .map(|t| Entry::Del(revision, t).render())
            .chain(adds.into_iter().map(|t| Entry::Add(revision, t).render()))
            .collect();
        let op_count = lines.len();
        lines.push(Entry::Commit(revision).render());

        let cut = match crash {
            None => None,
            Some(CrashPoint::AfterOps(n)) => Some((n.min(op_count), None)),
            Some(CrashPoint::TornLine(i)) => {
                let i = i.min(lines.len() - 1);
                let half = lines[i].len() / 2;
                Some((i, Some(lines[i][..half].to_string())))
            }
            Some(CrashPoint::AfterCommit) => Some((lines.len(), None)),
        };
        if let Some((complete, torn)) = cut {
            writer.poisoned = true;
            let mut bytes = lines[..complete].concat();
            bytes.push_str(torn.as_deref().unwrap_or(""));
            writer.log.write_all(bytes.as_bytes())?;
            writer.log.sync_data()?;
            return Err(StoreError::Poisoned);
        }

        let appended = writer
            .log
            .write_all(lines.concat().as_bytes())
            .and_then(|()| writer.log.sync_data());
        if let Err(e) = appended {
            writer.poisoned = true;
            return Err(e.into());
        }
        let mut state = (*current).clone();
        state.tuples = tuples;
        state.revision = revision;
        let meta = Meta {
            store_id: state.store_id.clone(),
            name: state.name.clone(),
            revision,
        };
        self.publish(state);
        write_meta(&self.dir, &meta)?;
        Ok(revision)
    }

    fn lock_writer(&self) -> Result<std::sync::MutexGuard<'_, Writer>, StoreError> {
        let writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if writer.poisoned {
            return Err(StoreError::Poisoned);
        }
        Ok(writer)
    }

    fn publish(&self, state: StoreState) {
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(state);
    }
}

fn load_models(dir: &Path) -> Result<BTreeMap<String, Arc<AuthorizationModel>>, StoreError> {
    let mut models = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if file.ends_with(".tmp") {
            fs::remove_file(&path)?;
            continue;
        }
        let Some(id) = file.strip_suffix(MODEL_SUFFIX) else {
            continue;
        };
        if id.len() != 8 || !id.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let bytes = fs::read(&path)?;
        let model = import_model(&bytes).map_err(|e| StoreError::Corrupt(format!("model {id}: {e}")))?;
        models.insert(id.to_string(), Arc::new(model));
    }
    Ok(models)
}

fn write_meta(dir: &Path, meta: &Meta) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec(meta).map_err(io::Error::other)?;
    replace_file(dir, META_FILE, &bytes)
}

/// Writes `name` in `dir` through a synced temporary file and a rename.
fn replace_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = dir.join(format!("{name}.tmp"));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join(name))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}
