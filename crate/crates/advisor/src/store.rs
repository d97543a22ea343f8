use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::ApiError;
use crate::session::{LoggedEvent, Session};

const LOG_EXT: &str = "jsonl";

/// Sessions in memory, each backed by an append-only log
/// `<data_dir>/<id>.jsonl` with one event per line.
#[derive(Debug)]
pub struct Store {
    data_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Store {
    /// Opens `data_dir`, creating it if needed, and replays every log in it.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&data_dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != LOG_EXT) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let events = read_log(&path)?;
            let session = Session::replay(&id, events)
                .map_err(|e| ApiError::Unprocessable(format!("{}: {e}", path.display())))?;
            tracing::info!(session = %id, events = session.events.len(), "restored session");
            sessions.insert(id, Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            data_dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.data_dir.join(format!("{id}.{LOG_EXT}"))
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Persists a new session's full log and registers it.
    pub fn insert(&self, session: Session) -> Result<(), ApiError> {
        if !valid_id(&session.id) {
            return Err(ApiError::BadRequest(format!(
                "session_id: {:?} must be 1-64 characters of [A-Za-z0-9_-]",
                session.id
            )));
        }
        let mut map = self.sessions.write().expect("session map poisoned");
        if map.contains_key(&session.id) {
            return Err(ApiError::Conflict(format!(
                "session {} already exists",
                session.id
            )));
        }
        let path = self.log_path(&session.id);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        for ev in &session.events {
            write_event(&mut file, ev)?;
        }
        file.sync_data()?;
        map.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(())
    }

    /// Writes `ev` to the session's log, then folds it into `session`.
    /// The caller holds the session lock.
    pub fn append(&self, session: &mut Session, ev: LoggedEvent) -> Result<(), ApiError> {
        // validate against a copy first so a rejected event never reaches disk
        let mut next = session.clone();
        next.apply(ev.clone())?;
        let mut file = OpenOptions::new()
            .append(true)
            .open(self.log_path(&session.id))?;
        write_event(&mut file, &ev)?;
        file.sync_data()?;
        *session = next;
        Ok(())
    }
}

fn write_event(file: &mut File, ev: &LoggedEvent) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(ev).map_err(std::io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)
}

pub fn read_log(path: &Path) -> Result<Vec<LoggedEvent>, ApiError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| {
            ApiError::Unprocessable(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        events.push(ev);
    }
    Ok(events)
}
