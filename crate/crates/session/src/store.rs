//! Durable session storage: one append-only JSON Lines log per session in
//! the storage directory, named `<session_id>.jsonl`.
//!
//! Every mutation runs under the session's writer lock, is checked by
//! folding it into a copy of the record, and is flushed to disk with
//! `fsync` before the in-memory snapshot changes. Readers only clone the
//! current snapshot.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rlfd_core::experiment::phase_keyframes;
use rlfd_core::record::{read_events, write_event, SessionEvent, SessionRecord};
use rlfd_core::teaching::Keyframe;
use rlfd_core::Phase;

use crate::error::{ServiceError, ServiceResult};

/// Keyframes and conditioning of each phase, in protocol order.
pub type PhasePlan = Vec<(Vec<Keyframe>, Option<f64>)>;

pub fn phase_plan(record: &SessionRecord) -> ServiceResult<PhasePlan> {
    Phase::ALL
        .iter()
        .map(|&p| phase_keyframes(&record.settings, p).map_err(|e| e.in_phase(p).into()))
        .collect()
}

pub struct SessionHandle {
    writer: tokio::sync::Mutex<File>,
    snapshot: RwLock<Arc<SessionRecord>>,
    plan: Arc<PhasePlan>,
}

impl SessionHandle {
    pub fn snapshot(&self) -> Arc<SessionRecord> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    pub fn plan(&self) -> &PhasePlan {
        &self.plan
    }

    /// Runs `f` on the current record under the writer lock, appends the
    /// events it returns, and publishes the new record.
    pub async fn mutate<T, F>(&self, f: F) -> ServiceResult<(Arc<SessionRecord>, T)>
    where
        F: FnOnce(&SessionRecord, &PhasePlan) -> ServiceResult<(Vec<SessionEvent>, T)>,
    {
        let mut file = self.writer.lock().await;
        let current = self.snapshot();
        let (events, value) = f(&current, &self.plan)?;
        let next = Arc::new(append(&mut file, &current, &events)?);
        *self.snapshot.write().expect("snapshot lock poisoned") = next.clone();
        Ok((next, value))
    }
}

fn append(file: &mut File, record: &SessionRecord, events: &[SessionEvent]) -> ServiceResult<SessionRecord> {
    if events.is_empty() {
        return Ok(record.clone());
    }
    let mut next = record.clone();
    let mut buf = Vec::new();
    for e in events {
        next.apply(e).map_err(|err| ServiceError::Invalid(err.to_string()))?;
        write_event(&mut buf, e)?;
    }
    file.write_all(&buf)?;
    file.sync_data()?;
    Ok(next)
}

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl Store {
    /// Opens `dir`, creating it if needed, and loads every session log in
    /// it. A log whose last line was cut short by a crash is truncated to
    /// its last complete event. Logs that fail to fold are skipped and
    /// reported.
    pub fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            match load(&path) {
                Ok(handle) => {
                    let id = handle.snapshot().session_id.clone();
                    sessions.insert(id, Arc::new(handle));
                }
                Err(e) => tracing::error!(path = %path.display(), error = %e, "skipping unreadable session log"),
            }
        }
        Ok(Store {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> ServiceResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn handles(&self) -> Vec<Arc<SessionHandle>> {
        self.sessions.read().expect("session map lock poisoned").values().cloned().collect()
    }

    /// Persists the creation event of `record` and registers the session.
    pub fn create(&self, record: SessionRecord, plan: PhasePlan) -> ServiceResult<Arc<SessionHandle>> {
        let path = self.log_path(&record.session_id);
        let mut file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        let events = record.to_events();
        let folded = SessionRecord::fold(&events).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let mut buf = Vec::new();
        for e in &events {
            write_event(&mut buf, e)?;
        }
        file.write_all(&buf)?;
        file.sync_all()?;
        File::open(&self.dir)?.sync_all()?;
        let handle = Arc::new(SessionHandle {
            writer: tokio::sync::Mutex::new(file),
            snapshot: RwLock::new(Arc::new(folded)),
            plan: Arc::new(plan),
        });
        self.sessions
            .write()
            .expect("session map lock poisoned")
            .insert(record.session_id.clone(), handle.clone());
        Ok(handle)
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }
}

fn load(path: &Path) -> ServiceResult<SessionHandle> {
    let mut file = OpenOptions::new().read(true).append(true).open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "truncating torn final event");
        file.set_len(complete as u64)?;
        file.sync_all()?;
    }
    file.seek(SeekFrom::End(0))?;
    let events = read_events(BufReader::new(&bytes[..complete]))?;
    let record = SessionRecord::fold(&events)?;
    let plan = phase_plan(&record)?;
    Ok(SessionHandle {
        writer: tokio::sync::Mutex::new(file),
        snapshot: RwLock::new(Arc::new(record)),
        plan: Arc::new(plan),
    })
}
