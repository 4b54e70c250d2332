use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use lsvt_core::raster::io::read_mask;
use lsvt_core::raster::BinaryMask;
use lsvt_core::store::{execute, Execution, ReplayContext, SessionOp, SessionRecord, SessionStatus, SessionStore};
use lsvt_core::tracker::{HttpBackend, NativeBackend, SegmentBackend};
use lsvt_core::{Error, TrackSession, TrackerParams, VideoSequence};

use crate::error::{ApiError, ApiResult};

/// Sequences up to this many frames propagate inside the request.
pub const DEFAULT_SYNC_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// External segmentation backend; the native tracker when unset.
    pub backend_url: Option<String>,
    pub sync_limit: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            backend_url: None,
            sync_limit: DEFAULT_SYNC_LIMIT,
        }
    }
}

/// Everything readers see for one session; replaced wholesale on each
/// committed mutation so no reader observes a half-applied change.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub record: SessionRecord,
    pub session: Option<TrackSession>,
    pub truth: Option<Arc<Vec<BinaryMask>>>,
    pub halted_at: Option<usize>,
}

#[derive(Debug)]
pub struct SessionHandle {
    pub id: String,
    pub store: SessionStore,
    pub sequence: Arc<VideoSequence>,
    busy: AtomicBool,
    snapshot: RwLock<Arc<Snapshot>>,
}

/// Held by the single writer of a session; released on drop.
pub struct WriteGuard(Arc<SessionHandle>);

impl Drop for WriteGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

impl SessionHandle {
    fn new(id: String, store: SessionStore, sequence: Arc<VideoSequence>, snapshot: Snapshot) -> Self {
        SessionHandle {
            id,
            store,
            sequence,
            busy: AtomicBool::new(false),
            snapshot: RwLock::new(Arc::new(snapshot)),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Claims the session for one mutation, or fails with 409.
    pub fn try_write(self: &Arc<Self>) -> ApiResult<WriteGuard> {
        self.busy
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .map(|_| WriteGuard(self.clone()))
            .map_err(|_| ApiError::busy())
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(snapshot);
    }

    /// Persists and publishes a new record without touching the session.
    pub fn set_status(&self, _guard: &WriteGuard, status: SessionStatus) -> ApiResult<()> {
        let mut next = (*self.snapshot()).clone();
        next.record.status = status;
        self.store.write_record(&next.record).map_err(persist_error)?;
        self.publish(next);
        Ok(())
    }

    /// Runs one operation: log it, rewrite derived masks, then publish.
    pub fn apply(&self, _guard: &WriteGuard, op: &SessionOp, backend: &Arc<dyn SegmentBackend>) -> ApiResult<Arc<Snapshot>> {
        let current = self.snapshot();
        let ctx = ReplayContext {
            sequence: self.sequence.clone(),
            params: current.record.params.clone(),
            backend: backend.clone(),
        };
        let (session, logged, error) = match execute(current.session.as_ref(), op, &ctx) {
            Execution::Rejected(e) => {
                if current.record.status == SessionStatus::Propagating {
                    self.finish_rejected(&current)?;
                }
                return Err(e.into());
            }
            Execution::Applied { session, logged, error } => (session, logged, error),
        };
        self.store.append(&logged).map_err(persist_error)?;
        self.store.write_masks(&session).map_err(persist_error)?;
        let mut record = current.record.clone();
        record.sync(&session);
        record.status = if error.is_some() { SessionStatus::Error } else { SessionStatus::Idle };
        record.last_error = error.as_ref().map(|e| e.to_string());
        self.store.write_record(&record).map_err(persist_error)?;
        let halted_at = match &error {
            Some(Error::Backend { frame, .. }) => Some(*frame),
            _ => None,
        };
        let next = Snapshot {
            record,
            session: Some(session),
            truth: current.truth.clone(),
            halted_at,
        };
        self.publish(next);
        match error {
            Some(e) => Err(e.into()),
            None => Ok(self.snapshot()),
        }
    }

    fn finish_rejected(&self, current: &Snapshot) -> ApiResult<()> {
        let mut next = current.clone();
        next.record.status = SessionStatus::Idle;
        self.store.write_record(&next.record).map_err(persist_error)?;
        self.publish(next);
        Ok(())
    }

    pub fn set_truth(&self, _guard: &WriteGuard, truth: Vec<BinaryMask>) -> ApiResult<()> {
        let dir = self.store.dir().join(lsvt_core::store::TRUTH_DIR);
        fs::create_dir_all(&dir).map_err(|e| ApiError::internal(format!("creating {}: {e}", dir.display())))?;
        for (k, m) in truth.iter().enumerate() {
            lsvt_core::raster::io::write_mask(m, self.store.truth_path(k)).map_err(persist_error)?;
        }
        let mut next = (*self.snapshot()).clone();
        next.truth = Some(Arc::new(truth));
        self.publish(next);
        Ok(())
    }
}

fn persist_error(e: Error) -> ApiError {
    ApiError::internal(format!("persisting session: {e}"))
}

pub struct AppState {
    pub config: ServiceConfig,
    pub backend: Arc<dyn SegmentBackend>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("config", &self.config)
            .field("backend", &self.backend.name())
            .finish_non_exhaustive()
    }
}

impl AppState {
    /// Opens the data directory and reloads every persisted session by
    /// replaying its log.
    pub fn open(config: ServiceConfig) -> Result<Self, Error> {
        let backend: Arc<dyn SegmentBackend> = match &config.backend_url {
            Some(url) => Arc::new(HttpBackend::new(url.clone(), HttpBackend::DEFAULT_TIMEOUT)),
            None => Arc::new(NativeBackend),
        };
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: ServiceConfig, backend: Arc<dyn SegmentBackend>) -> Result<Self, Error> {
        let root = sessions_dir(&config.data_dir);
        fs::create_dir_all(&root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
        let state = AppState {
            config,
            backend,
            sessions: RwLock::new(HashMap::new()),
        };
        let mut entries: Vec<PathBuf> = fs::read_dir(&root)
            .map_err(|e| Error::io(format!("listing {}", root.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(lsvt_core::store::RECORD_FILE).is_file())
            .collect();
        entries.sort();
        for dir in entries {
            match state.reload(&dir) {
                Ok(handle) => {
                    tracing::info!(session = %handle.id, "reloaded session");
                    state.insert(handle);
                }
                Err(e) => tracing::warn!(dir = %dir.display(), error = %e, "skipping session that failed to reload"),
            }
        }
        Ok(state)
    }

    fn reload(&self, dir: &Path) -> Result<Arc<SessionHandle>, Error> {
        let store = SessionStore::open(dir)?;
        let (mut record, sequence, session) = store.restore(self.backend.clone())?;
        match &session {
            Some(s) => {
                store.write_masks(s)?;
                record.sync(s);
            }
            None => store.clear_masks()?,
        }
        // A propagation interrupted by shutdown is not resumed.
        if record.status == SessionStatus::Propagating {
            record.status = SessionStatus::Idle;
        }
        store.write_record(&record)?;
        let truth = read_truth(&store, sequence.len())?;
        let id = record.session_id.clone();
        Ok(Arc::new(SessionHandle::new(
            id,
            store,
            sequence,
            Snapshot {
                record,
                session,
                truth: truth.map(Arc::new),
                halted_at: None,
            },
        )))
    }

    fn insert(&self, handle: Arc<SessionHandle>) {
        self.sessions.write().expect("sessions lock").insert(handle.id.clone(), handle);
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create(&self, manifest_path: PathBuf, sequence: Arc<VideoSequence>, params: TrackerParams) -> ApiResult<Arc<SessionHandle>> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord::new(id.clone(), manifest_path, params, self.backend.name(), sequence.len());
        let dir = sessions_dir(&self.config.data_dir).join(&id);
        let store = SessionStore::create(dir, &record).map_err(persist_error)?;
        let handle = Arc::new(SessionHandle::new(
            id,
            store,
            sequence,
            Snapshot {
                record,
                session: None,
                truth: None,
                halted_at: None,
            },
        ));
        self.insert(handle.clone());
        Ok(handle)
    }
}

fn sessions_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("sessions")
}

fn read_truth(store: &SessionStore, frames: usize) -> Result<Option<Vec<BinaryMask>>, Error> {
    if !store.truth_path(0).is_file() {
        return Ok(None);
    }
    (0..frames).map(|k| read_mask(store.truth_path(k))).collect::<Result<Vec<_>, _>>().map(Some)
}
