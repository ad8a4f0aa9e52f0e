//! JSON files under one directory, each replaced atomically on write.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fee_core::elicitation::{ElicitationStore, ParticipantHistory, TeamSession};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::state::Session;

pub const SESSIONS_FILE: &str = "sessions.json";
pub const PREFERENCES_FILE: &str = "preferences.json";
pub const CONSENSUS_FILE: &str = "consensus.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{} is corrupt: {detail}", path.display())]
    Corrupt { path: PathBuf, detail: String },
}

/// Everything persisted, as loaded at startup.
#[derive(Debug, Default)]
pub struct Snapshot {
    pub sessions: BTreeMap<String, Session>,
    pub elicitation: ElicitationStore,
}

#[derive(Debug, Clone)]
pub struct DiskStore {
    dir: PathBuf,
}

impl DiskStore {
    /// Opens (creating if needed) the directory and reads every file.
    /// Missing files load as empty; a file that does not parse is an error.
    pub fn open(dir: impl Into<PathBuf>) -> Result<(Self, Snapshot), StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let store = DiskStore { dir };
        let sessions = store.read(SESSIONS_FILE)?.unwrap_or_default();
        let preferences: Vec<ParticipantHistory> =
            store.read(PREFERENCES_FILE)?.unwrap_or_default();
        let teams: BTreeMap<String, TeamSession> =
            store.read(CONSENSUS_FILE)?.unwrap_or_default();
        Ok((
            store,
            Snapshot {
                sessions,
                elicitation: ElicitationStore { preferences, teams },
            },
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn read<T: DeserializeOwned>(&self, file: &str) -> Result<Option<T>, StoreError> {
        let path = self.path(file);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| StoreError::Corrupt {
                path,
                detail: e.to_string(),
            })
    }

    /// Writes to a temporary sibling, syncs it, then renames over the target.
    pub fn write<T: Serialize + ?Sized>(&self, file: &str, value: &T) -> Result<(), StoreError> {
        let path = self.path(file);
        let tmp = self.dir.join(format!(".{file}.tmp"));
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut bytes = serde_json::to_vec_pretty(value).expect("store documents serialize");
        bytes.push(b'\n');
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io_err)
    }

    pub fn write_sessions(&self, sessions: &BTreeMap<String, Session>) -> Result<(), StoreError> {
        self.write(SESSIONS_FILE, sessions)
    }

    pub fn write_preferences(&self, store: &ElicitationStore) -> Result<(), StoreError> {
        self.write(PREFERENCES_FILE, &store.preferences)
    }

    pub fn write_consensus(&self, store: &ElicitationStore) -> Result<(), StoreError> {
        self.write(CONSENSUS_FILE, &store.teams)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fee_core::elicitation::reference_records;

    #[test]
    fn empty_directory_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (_, snap) = DiskStore::open(dir.path().join("nested")).unwrap();
        assert!(snap.sessions.is_empty());
        assert_eq!(snap.elicitation, ElicitationStore::default());
    }

    #[test]
    fn write_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = DiskStore::open(dir.path()).unwrap();
        let mut es = ElicitationStore::new();
        for r in reference_records() {
            es.record_preference(r).unwrap();
        }
        store.write_preferences(&es).unwrap();
        store.write_consensus(&es).unwrap();
        let (_, snap) = DiskStore::open(dir.path()).unwrap();
        assert_eq!(snap.elicitation, es);
        assert!(!dir.path().join(".preferences.json.tmp").exists());
    }

    #[test]
    fn corrupt_file_names_itself() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(CONSENSUS_FILE), "{ not json").unwrap();
        let err = DiskStore::open(dir.path()).unwrap_err();
        assert!(matches!(err, StoreError::Corrupt { .. }));
        assert!(err.to_string().contains(CONSENSUS_FILE));
    }
}
