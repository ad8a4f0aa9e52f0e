use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use fee_core::dataset::Dataset;
use fee_core::elicitation::ElicitationStore;
use fee_core::metrics::{OutcomeTable, ThresholdConfig};
use fee_core::model::TrainedModel;
use fee_core::whatif::EditOverlay;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ApiError;
use crate::store::{DiskStore, StoreError};

/// One user's working state: what-if edits and personal thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    pub overlay: EditOverlay,
    pub threshold_config: ThresholdConfig,
    pub created_at: DateTime<Utc>,
}

impl Session {
    pub fn new(session_id: String, participant_id: Option<String>) -> Self {
        Session {
            overlay: EditOverlay::new(session_id.clone()),
            session_id,
            participant_id,
            threshold_config: ThresholdConfig::default(),
            created_at: Utc::now(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("model does not match the dataset: {0}")]
    Model(#[from] fee_core::model::ModelError),
    #[error("cannot build the held-out table: {0}")]
    Metrics(#[from] fee_core::metrics::MetricError),
    #[error("cannot load dataset: {0}")]
    Dataset(#[from] fee_core::dataset::DatasetError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
}

pub(crate) struct Inner {
    pub dataset: Dataset,
    pub model: TrainedModel,
    pub base: OutcomeTable,
    pub disk: DiskStore,
    pub sessions: RwLock<BTreeMap<String, Session>>,
    pub elicitation: RwLock<ElicitationStore>,
}

/// Shared, cheaply cloneable application state.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    /// Checks the model against the dataset and loads persisted state
    /// from `store_dir`.
    pub fn new(
        dataset: Dataset,
        model: TrainedModel,
        store_dir: &Path,
    ) -> Result<Self, StartupError> {
        model.check_dataset(&dataset)?;
        let base = OutcomeTable::for_model(&model, &dataset)?;
        let (disk, snapshot) = DiskStore::open(store_dir)?;
        Ok(AppState(Arc::new(Inner {
            dataset,
            model,
            base,
            disk,
            sessions: RwLock::new(snapshot.sessions),
            elicitation: RwLock::new(snapshot.elicitation),
        })))
    }

    /// Loads the dataset (JSON or raw German credit file) and a model JSON.
    pub fn load(data: &Path, model: &Path, store_dir: &Path) -> Result<Self, StartupError> {
        let dataset = fee_core::german::load_file(data)?;
        let text = std::fs::read_to_string(model).map_err(|source| StartupError::Read {
            path: model.display().to_string(),
            source,
        })?;
        let model = TrainedModel::from_json(&text)?;
        Self::new(dataset, model, store_dir)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.0.dataset
    }

    pub fn model(&self) -> &TrainedModel {
        &self.0.model
    }

    pub fn base(&self) -> &OutcomeTable {
        &self.0.base
    }

    pub fn disk(&self) -> &DiskStore {
        &self.0.disk
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.0.sessions.read().expect("session lock").get(id).cloned()
    }

    /// Held-out table with the session's overlay applied, and the session's
    /// thresholds. Without a session: the base table and default thresholds.
    pub fn view(&self, session: Option<&str>) -> Result<(OutcomeTable, ThresholdConfig), ApiError> {
        match session {
            None => Ok((self.0.base.clone(), ThresholdConfig::default())),
            Some(id) => {
                let s = self.session(id).ok_or_else(|| unknown_session(id))?;
                Ok((s.overlay.apply_to(&self.0.base), s.threshold_config))
            }
        }
    }

    /// Applies `f` to a copy of the named session (created when missing
    /// and `create` is set), persists the whole session map, then commits.
    pub fn update_session<T>(
        &self,
        id: Option<&str>,
        create: bool,
        f: impl FnOnce(&mut Session) -> Result<T, ApiError>,
    ) -> Result<(Session, T), ApiError> {
        let mut sessions = self.0.sessions.write().expect("session lock");
        let id = match id {
            Some(id) if id.trim().is_empty() => {
                return Err(ApiError::bad_request("invalid_session", "session id is empty"))
            }
            Some(id) => id.to_string(),
            None if create => next_session_id(&sessions),
            None => return Err(ApiError::bad_request("missing_session", "a session id is required")),
        };
        let mut session = match sessions.get(&id) {
            Some(s) => s.clone(),
            None if create => Session::new(id.clone(), None),
            None => return Err(unknown_session(&id)),
        };
        let out = f(&mut session)?;
        let mut next = sessions.clone();
        next.insert(id, session.clone());
        self.0
            .disk
            .write_sessions(&next)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        *sessions = next;
        Ok((session, out))
    }

    /// Same copy, persist, commit cycle for the elicitation store.
    pub fn update_elicitation<T>(
        &self,
        f: impl FnOnce(&mut ElicitationStore) -> Result<T, ApiError>,
        persist: impl FnOnce(&DiskStore, &ElicitationStore) -> Result<(), StoreError>,
    ) -> Result<T, ApiError> {
        let mut store = self.0.elicitation.write().expect("elicitation lock");
        let mut next = store.clone();
        let out = f(&mut next)?;
        persist(&self.0.disk, &next).map_err(|e| ApiError::internal(e.to_string()))?;
        *store = next;
        Ok(out)
    }

    pub fn elicitation(&self) -> std::sync::RwLockReadGuard<'_, ElicitationStore> {
        self.0.elicitation.read().expect("elicitation lock")
    }
}

fn next_session_id(sessions: &BTreeMap<String, Session>) -> String {
    (sessions.len() + 1..)
        .map(|n| format!("session-{n}"))
        .find(|id| !sessions.contains_key(id))
        .expect("unbounded range")
}

pub fn unknown_session(id: &str) -> ApiError {
    ApiError::not_found("unknown_session", format!("unknown session `{id}`"))
}
