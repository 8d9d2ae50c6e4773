//! Authoring sessions, optionally persisted as one JSON file per session.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use gazeforge_core::optimizer::CorrectionResult;
use gazeforge_core::GaussianMixtureSpec;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const DEFAULT_CANVAS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionState {
    pub session_id: String,
    pub spec: GaussianMixtureSpec,
    pub prompt: String,
    #[serde(default)]
    pub last_correction: Option<CorrectionResult>,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Sessions keyed by id. Each session has its own lock so operations on one
/// session are serialized while different sessions proceed in parallel.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<SessionState>>>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens `data_dir/sessions`, loading every session file found there.
    pub fn open(data_dir: &Path) -> Result<Self> {
        let dir = data_dir.join("sessions");
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let mut sessions = BTreeMap::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| io_error(&dir, e))? {
            let path = entry.map_err(|e| io_error(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| io_error(&path, e))?;
            let state: SessionState = serde_json::from_slice(&bytes)
                .map_err(|e| AppError::Core(gazeforge_core::Error::Parse(format!("{}: {e}", path.display()))))?;
            state.spec.validate()?;
            sessions.insert(state.session_id.clone(), Arc::new(Mutex::new(state)));
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn create(&self, prompt: String, spec: Option<GaussianMixtureSpec>) -> Result<SessionState> {
        let spec = spec.unwrap_or_else(|| GaussianMixtureSpec::empty(DEFAULT_CANVAS, DEFAULT_CANVAS));
        spec.validate()?;
        let now = now_ms();
        let state = SessionState {
            session_id: uuid::Uuid::new_v4().to_string(),
            spec,
            prompt,
            last_correction: None,
            created_at: now,
            updated_at: now,
        };
        self.persist(&state)?;
        self.sessions
            .write()
            .expect("session map lock")
            .insert(state.session_id.clone(), Arc::new(Mutex::new(state.clone())));
        Ok(state)
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().expect("session map lock").keys().cloned().collect()
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| AppError::NotFound(format!("unknown session {id}")))
    }

    pub fn get(&self, id: &str) -> Result<SessionState> {
        Ok(self.handle(id)?.lock().expect("session lock").clone())
    }

    /// Runs `f` under the session's lock. Changes are persisted and kept only
    /// if `f` succeeds.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut SessionState) -> Result<T>) -> Result<T> {
        let handle = self.handle(id)?;
        let mut guard = handle.lock().expect("session lock");
        let mut draft = guard.clone();
        let out = f(&mut draft)?;
        draft.updated_at = now_ms().max(draft.updated_at);
        self.persist(&draft)?;
        *guard = draft;
        Ok(out)
    }

    /// Runs `f` under the session's lock without modifying it.
    pub fn with<T>(&self, id: &str, f: impl FnOnce(&SessionState) -> Result<T>) -> Result<T> {
        let handle = self.handle(id)?;
        let guard = handle.lock().expect("session lock");
        f(&guard)
    }

    fn persist(&self, state: &SessionState) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", state.session_id));
        let tmp = dir.join(format!(".{}.json.tmp", state.session_id));
        let bytes = serde_json::to_vec_pretty(state).expect("session serializes");
        std::fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> AppError {
    AppError::Core(gazeforge_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
