//! On-disk tracking sessions.
//!
//! The operation log (`events.jsonl`) is the source of truth. Masks under
//! `masks/` are derived data: replaying the log against the same sequence
//! and backend rebuilds them byte for byte.
//!
//! ```text
//! session.json        SessionRecord
//! events.jsonl        one LoggedEvent per line
//! masks/mask_0000.pgm masks for frames 0..=cursor
//! truth/mask_0000.pgm optional reference masks
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::raster::io::{encode_mask, read_mask};
use crate::raster::BinaryMask;
use crate::sequence::{load_manifest, VideoSequence};
use crate::synth::mask_file_name;
use crate::tracker::{PromptPoint, SegmentBackend, TrackSession, TrackerParams};

pub const RECORD_FILE: &str = "session.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const MASK_DIR: &str = "masks";
pub const TRUTH_DIR: &str = "truth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Propagating,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub manifest_path: PathBuf,
    pub params: TrackerParams,
    /// `native` or the URL of an external backend.
    pub backend: String,
    pub revision: u64,
    pub cursor: Option<usize>,
    pub frames: usize,
    pub status: SessionStatus,
    #[serde(default)]
    pub last_error: Option<String>,
}

impl SessionRecord {
    pub fn new(session_id: impl Into<String>, manifest_path: PathBuf, params: TrackerParams, backend: String, frames: usize) -> Self {
        SessionRecord {
            session_id: session_id.into(),
            manifest_path,
            params,
            backend,
            revision: 0,
            cursor: None,
            frames,
            status: SessionStatus::Idle,
            last_error: None,
        }
    }

    pub fn sync(&mut self, session: &TrackSession) {
        self.revision = session.revision();
        self.cursor = session.cursor();
    }
}

/// One mutation of a tracking session. `halted_at` records a backend
/// failure so replay can stop at the same frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SessionOp {
    Init {
        prompts: Vec<PromptPoint>,
    },
    AddPrompts {
        prompts: Vec<PromptPoint>,
    },
    Refine {
        prompts: Vec<PromptPoint>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        halted_at: Option<usize>,
    },
    Propagate {
        from_frame: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        halted_at: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub op: SessionOp,
}

/// What replay needs besides the log.
#[derive(Clone)]
pub struct ReplayContext {
    pub sequence: Arc<VideoSequence>,
    pub params: TrackerParams,
    pub backend: Arc<dyn SegmentBackend>,
}

/// Result of executing one operation against a copy of the current state.
#[derive(Debug)]
pub enum Execution {
    /// Rejected before anything changed.
    Rejected(Error),
    /// State changed. `error` is set when the backend halted part way; the
    /// new state must still be kept and `logged` persisted.
    Applied {
        session: TrackSession,
        logged: SessionOp,
        error: Option<Error>,
    },
}

fn halted_frame(e: &Error) -> Option<usize> {
    match e {
        Error::Backend { frame, .. } => Some(*frame),
        _ => None,
    }
}

/// Runs `op` on a clone of `current`. Ops carrying `halted_at` are replayed
/// up to that frame instead of to the end of the sequence.
pub fn execute(current: Option<&TrackSession>, op: &SessionOp, ctx: &ReplayContext) -> Execution {
    let n = ctx.sequence.len();
    let needs_session = || Error::Precondition("session has no frame-0 mask yet".into());
    match op {
        SessionOp::Init { prompts } => {
            if current.is_some() {
                return Execution::Rejected(Error::Precondition("session already initialized".into()));
            }
            match TrackSession::init(ctx.sequence.clone(), ctx.params.clone(), prompts, ctx.backend.clone()) {
                Ok(session) => Execution::Applied {
                    session,
                    logged: op.clone(),
                    error: None,
                },
                Err(e) => Execution::Rejected(e),
            }
        }
        SessionOp::AddPrompts { prompts } => {
            let Some(current) = current else {
                return Execution::Rejected(needs_session());
            };
            let mut s = current.clone();
            match s.add_prompts(prompts) {
                Ok(_) => Execution::Applied {
                    session: s,
                    logged: op.clone(),
                    error: None,
                },
                Err(e) => Execution::Rejected(e),
            }
        }
        SessionOp::Refine { prompts, halted_at } => {
            let Some(current) = current else {
                return Execution::Rejected(needs_session());
            };
            let mut s = current.clone();
            let before = s.revision();
            match s.refine_range(prompts, halted_at.unwrap_or(n)) {
                Ok(()) => Execution::Applied {
                    session: s,
                    logged: op.clone(),
                    error: None,
                },
                Err(e) if s.revision() != before => Execution::Applied {
                    session: s,
                    logged: SessionOp::Refine {
                        prompts: prompts.clone(),
                        halted_at: halted_frame(&e),
                    },
                    error: Some(e),
                },
                Err(e) => Execution::Rejected(e),
            }
        }
        SessionOp::Propagate { from_frame, halted_at } => {
            let Some(current) = current else {
                return Execution::Rejected(needs_session());
            };
            let mut s = current.clone();
            let before = s.revision();
            match s.propagate_range(*from_frame, halted_at.unwrap_or(n)) {
                Ok(()) => Execution::Applied {
                    session: s,
                    logged: op.clone(),
                    error: None,
                },
                Err(e) if s.revision() != before => Execution::Applied {
                    session: s,
                    logged: SessionOp::Propagate {
                        from_frame: *from_frame,
                        halted_at: halted_frame(&e),
                    },
                    error: Some(e),
                },
                Err(e) => Execution::Rejected(e),
            }
        }
    }
}

/// Rebuilds a session from its operation log.
pub fn replay(ops: &[SessionOp], ctx: &ReplayContext) -> Result<Option<TrackSession>> {
    let mut state: Option<TrackSession> = None;
    for (i, op) in ops.iter().enumerate() {
        match execute(state.as_ref(), op, ctx) {
            Execution::Applied {
                session,
                error: None,
                ..
            } => state = Some(session),
            Execution::Applied { error: Some(e), .. } | Execution::Rejected(e) => {
                return Err(Error::Precondition(format!("replay of event {i} failed: {e}")));
            }
        }
    }
    Ok(state)
}

fn io_err(action: &str, path: &Path) -> impl FnOnce(std::io::Error) -> Error {
    let context = format!("{action} {}", path.display());
    move |e| Error::io(context, e)
}

/// A session directory.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn create(dir: impl Into<PathBuf>, record: &SessionRecord) -> Result<Self> {
        let store = SessionStore { dir: dir.into() };
        let masks = store.dir.join(MASK_DIR);
        fs::create_dir_all(&masks).map_err(io_err("creating", &masks))?;
        store.write_record(record)?;
        let events = store.events_path();
        fs::write(&events, "").map_err(io_err("writing", &events))?;
        Ok(store)
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let store = SessionStore { dir: dir.into() };
        let record = store.dir.join(RECORD_FILE);
        if !record.is_file() {
            return Err(Error::io(
                format!("opening session {}", store.dir.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "session.json not found"),
            ));
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn events_path(&self) -> PathBuf {
        self.dir.join(EVENTS_FILE)
    }

    pub fn mask_path(&self, frame: usize) -> PathBuf {
        self.dir.join(MASK_DIR).join(mask_file_name(frame))
    }

    pub fn truth_path(&self, frame: usize) -> PathBuf {
        self.dir.join(TRUTH_DIR).join(mask_file_name(frame))
    }

    pub fn read_record(&self) -> Result<SessionRecord> {
        let path = self.dir.join(RECORD_FILE);
        let text = fs::read_to_string(&path).map_err(io_err("reading", &path))?;
        serde_json::from_str(&text).map_err(Error::json)
    }

    /// Atomic replace via a temporary file.
    pub fn write_record(&self, record: &SessionRecord) -> Result<()> {
        let path = self.dir.join(RECORD_FILE);
        let tmp = self.dir.join(".session.json.tmp");
        let text = serde_json::to_string_pretty(record).expect("record serializes") + "\n";
        fs::write(&tmp, text).map_err(io_err("writing", &tmp))?;
        fs::rename(&tmp, &path).map_err(io_err("replacing", &path))
    }

    pub fn append(&self, op: &SessionOp) -> Result<LoggedEvent> {
        let seq = self.events()?.len() as u64;
        let event = LoggedEvent {
            seq,
            timestamp: Utc::now(),
            op: op.clone(),
        };
        let path = self.events_path();
        let mut file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err("opening", &path))?;
        let line = serde_json::to_string(&event).expect("event serializes") + "\n";
        file.write_all(line.as_bytes()).map_err(io_err("appending to", &path))?;
        Ok(event)
    }

    pub fn events(&self) -> Result<Vec<LoggedEvent>> {
        let path = self.events_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::format(Location::Line(i + 1), e.to_string()))
            })
            .collect()
    }

    pub fn ops(&self) -> Result<Vec<SessionOp>> {
        Ok(self.events()?.into_iter().map(|e| e.op).collect())
    }

    /// Writes masks `0..=cursor` and removes any stale ones beyond it.
    pub fn write_masks(&self, session: &TrackSession) -> Result<()> {
        let dir = self.dir.join(MASK_DIR);
        fs::create_dir_all(&dir).map_err(io_err("creating", &dir))?;
        let masks = session.masks();
        for (k, m) in masks.iter().enumerate() {
            let path = self.mask_path(k);
            let bytes = encode_mask(m);
            if fs::read(&path).ok().as_deref() != Some(bytes.as_slice()) {
                fs::write(&path, bytes).map_err(io_err("writing", &path))?;
            }
        }
        for k in masks.len()..session.sequence().len() {
            let path = self.mask_path(k);
            if path.exists() {
                fs::remove_file(&path).map_err(io_err("removing", &path))?;
            }
        }
        Ok(())
    }

    /// Masks for frames `0..` up to the first missing file.
    pub fn read_masks(&self) -> Result<Vec<BinaryMask>> {
        let mut out = Vec::new();
        loop {
            let path = self.mask_path(out.len());
            if !path.is_file() {
                return Ok(out);
            }
            out.push(read_mask(&path)?);
        }
    }

    pub fn clear_masks(&self) -> Result<()> {
        let dir = self.dir.join(MASK_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err("removing", &dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err("creating", &dir))
    }

    /// Loads the manifest named in the record and replays the log.
    pub fn restore(&self, backend: Arc<dyn SegmentBackend>) -> Result<(SessionRecord, Arc<VideoSequence>, Option<TrackSession>)> {
        let record = self.read_record()?;
        let sequence = Arc::new(load_manifest(&record.manifest_path)?);
        let ctx = ReplayContext {
            sequence: sequence.clone(),
            params: record.params.clone(),
            backend,
        };
        let session = replay(&self.ops()?, &ctx)?;
        Ok((record, sequence, session))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, write_scenario, SynthConfig};
    use crate::sequence::DisplayFormat;
    use crate::tracker::{BackendError, FrameRequest, NativeBackend, Segmentation};

    fn small() -> SynthConfig {
        SynthConfig {
            width: 96,
            height: 96,
            frames: 6,
            start_cells: 100.0,
            end_cells: 600.0,
            second_patch_from: Some(3),
            ..SynthConfig::default()
        }
    }

    fn context(cfg: &SynthConfig, backend: Arc<dyn SegmentBackend>) -> (ReplayContext, crate::synth::SynthScenario) {
        let s = generate(cfg).unwrap();
        (
            ReplayContext {
                sequence: Arc::new(s.sequence.clone()),
                params: s.params.clone(),
                backend,
            },
            s,
        )
    }

    fn applied(e: Execution) -> TrackSession {
        match e {
            Execution::Applied { session, error: None, .. } => session,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn op_json_layout() {
        let op = SessionOp::Propagate {
            from_frame: 2,
            halted_at: None,
        };
        assert_eq!(serde_json::to_string(&op).unwrap(), r#"{"op":"propagate","from_frame":2}"#);
        let back: SessionOp = serde_json::from_str(r#"{"op":"refine","prompts":[],"halted_at":4}"#).unwrap();
        assert_eq!(
            back,
            SessionOp::Refine {
                prompts: vec![],
                halted_at: Some(4)
            }
        );
    }

    #[test]
    fn replay_matches_live_session() {
        let (ctx, s) = context(&small(), Arc::new(NativeBackend));
        let ops = vec![
            SessionOp::Init {
                prompts: s.prompts.clone(),
            },
            SessionOp::Propagate {
                from_frame: 1,
                halted_at: None,
            },
            SessionOp::Refine {
                prompts: s.refine_prompts.clone(),
                halted_at: None,
            },
        ];
        let mut live = None;
        for op in &ops {
            live = Some(applied(execute(live.as_ref(), op, &ctx)));
        }
        let live = live.unwrap();
        let again = replay(&ops, &ctx).unwrap().unwrap();
        assert_eq!(live.revision(), 3);
        assert_eq!(again.revision(), live.revision());
        assert_eq!(again.masks(), live.masks());
        assert!(live.mask(5).unwrap().get(s.refine_prompts[0].row, s.refine_prompts[0].col));
    }

    #[test]
    fn rejected_ops_change_nothing() {
        let (ctx, s) = context(&small(), Arc::new(NativeBackend));
        assert!(matches!(
            execute(None, &SessionOp::Propagate { from_frame: 0, halted_at: None }, &ctx),
            Execution::Rejected(Error::Precondition(_))
        ));
        let session = applied(execute(None, &SessionOp::Init { prompts: s.prompts.clone() }, &ctx));
        let far = SessionOp::Propagate {
            from_frame: 4,
            halted_at: None,
        };
        assert!(matches!(execute(Some(&session), &far, &ctx), Execution::Rejected(_)));
        let again = SessionOp::Init { prompts: s.prompts.clone() };
        assert!(matches!(execute(Some(&session), &again, &ctx), Execution::Rejected(_)));
    }

    struct FailFrom(usize);

    impl SegmentBackend for FailFrom {
        fn segment(&self, r: &FrameRequest<'_>) -> std::result::Result<Segmentation, BackendError> {
            if r.frame_index >= self.0 {
                return Err(BackendError::Unavailable("down".into()));
            }
            NativeBackend.segment(r)
        }
        fn name(&self) -> String {
            "flaky".into()
        }
    }

    #[test]
    fn halted_propagation_replays_to_same_state() {
        let (ctx, s) = context(&small(), Arc::new(FailFrom(4)));
        let init = applied(execute(None, &SessionOp::Init { prompts: s.prompts.clone() }, &ctx));
        let op = SessionOp::Propagate {
            from_frame: 1,
            halted_at: None,
        };
        let Execution::Applied { session, logged, error } = execute(Some(&init), &op, &ctx) else {
            panic!("expected partial application");
        };
        assert!(matches!(error, Some(Error::Backend { frame: 4, .. })));
        assert_eq!(
            logged,
            SessionOp::Propagate {
                from_frame: 1,
                halted_at: Some(4)
            }
        );
        assert_eq!(session.cursor(), Some(3));

        // Replay with a healthy backend stops where the original halted.
        let healthy = ReplayContext {
            backend: Arc::new(NativeBackend),
            ..ctx.clone()
        };
        let ops = [SessionOp::Init { prompts: s.prompts.clone() }, logged];
        let replayed = replay(&ops, &healthy).unwrap().unwrap();
        assert_eq!(replayed.revision(), session.revision());
        assert_eq!(replayed.masks(), session.masks());
    }

    #[test]
    fn store_round_trip_and_rebuild() {
        let tmp = tempfile::tempdir().unwrap();
        let s = generate(&small()).unwrap();
        let data = tmp.path().join("data");
        write_scenario(&s, &data, DisplayFormat::Png).unwrap();
        let manifest = data.join("manifest.json");
        let sequence = Arc::new(load_manifest(&manifest).unwrap());
        let ctx = ReplayContext {
            sequence: sequence.clone(),
            params: s.params.clone(),
            backend: Arc::new(NativeBackend),
        };

        let mut record = SessionRecord::new("abc", manifest.clone(), s.params.clone(), "native".into(), sequence.len());
        let store = SessionStore::create(tmp.path().join("session"), &record).unwrap();
        let mut state = None;
        for op in [
            SessionOp::Init {
                prompts: s.prompts.clone(),
            },
            SessionOp::Propagate {
                from_frame: 1,
                halted_at: None,
            },
        ] {
            let session = applied(execute(state.as_ref(), &op, &ctx));
            store.append(&op).unwrap();
            store.write_masks(&session).unwrap();
            record.sync(&session);
            store.write_record(&record).unwrap();
            state = Some(session);
        }
        let live = state.unwrap();
        let before: Vec<Vec<u8>> = (0..6).map(|k| fs::read(store.mask_path(k)).unwrap()).collect();

        store.clear_masks().unwrap();
        assert!(store.read_masks().unwrap().is_empty());
        let reopened = SessionStore::open(store.dir()).unwrap();
        let (rec, _, restored) = reopened.restore(Arc::new(NativeBackend)).unwrap();
        let restored = restored.unwrap();
        assert_eq!(rec, record);
        assert_eq!(restored.revision(), rec.revision);
        reopened.write_masks(&restored).unwrap();
        let after: Vec<Vec<u8>> = (0..6).map(|k| fs::read(reopened.mask_path(k)).unwrap()).collect();
        assert_eq!(before, after);
        let masks = reopened.read_masks().unwrap();
        assert_eq!(masks.iter().collect::<Vec<_>>(), live.masks());
        assert_eq!(reopened.events().unwrap()[1].seq, 1);
    }

    #[test]
    fn stale_masks_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let (ctx, s) = context(&small(), Arc::new(NativeBackend));
        let record = SessionRecord::new("x", tmp.path().join("m.json"), s.params.clone(), "native".into(), 6);
        let store = SessionStore::create(tmp.path().join("s"), &record).unwrap();
        let init = applied(execute(None, &SessionOp::Init { prompts: s.prompts.clone() }, &ctx));
        let full = applied(execute(
            Some(&init),
            &SessionOp::Propagate {
                from_frame: 1,
                halted_at: None,
            },
            &ctx,
        ));
        store.write_masks(&full).unwrap();
        let cut = applied(execute(
            Some(&full),
            &SessionOp::AddPrompts {
                prompts: s.refine_prompts.clone(),
            },
            &ctx,
        ));
        store.write_masks(&cut).unwrap();
        assert_eq!(store.read_masks().unwrap().len(), 3);
        assert!(!store.mask_path(3).exists());
    }
}
