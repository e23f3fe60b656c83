//! On-disk session store: `<root>/<id>/manifest.json` written once, and
//! `<root>/<id>/judgments.log`, an append-only file of JSON lines synced
//! before each acknowledgment.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use super::{Ack, Judgment, Manifest, Session, SessionError, SessionSpec, MAX_SCORE};

const MANIFEST: &str = "manifest.json";
const LOG: &str = "judgments.log";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt store file {path} at line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("no session {0}")]
    NotFound(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(SessionStore {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        let valid = !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-');
        if !valid {
            return Err(StoreError::NotFound(id.to_string()));
        }
        Ok(self.root.join(id))
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().join(MANIFEST).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Creates and persists a new session under a fresh id.
    pub fn create(&self, spec: &SessionSpec) -> Result<Session, StoreError> {
        // validate before claiming a directory
        Manifest::build(String::new(), String::new(), spec)?;
        let mut n = self.list()?.len() + 1;
        let (id, dir) = loop {
            let id = format!("session-{n:04}");
            let dir = self.root.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(io_err(&dir)(e)),
            }
        };
        let token = format!("{:032x}", rand::thread_rng().gen::<u128>());
        let manifest = Manifest::build(id, token, spec)?;

        let tmp = dir.join("manifest.json.tmp");
        let path = dir.join(MANIFEST);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&json).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        let log = dir.join(LOG);
        File::create(&log)
            .and_then(|f| f.sync_all())
            .map_err(io_err(&log))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        sync_dir(&dir);
        Ok(Session::new(manifest))
    }

    /// Loads a session by replaying its judgment log over the manifest. A
    /// torn final line (from a crash mid-append) is ignored.
    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        let dir = self.dir(id)?;
        let path = dir.join(MANIFEST);
        let text = match fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let mut session = Session::new(manifest);

        let log = dir.join(LOG);
        let text = match fs::read_to_string(&log) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&log)(e)),
        };
        let complete_lines = if text.ends_with('\n') {
            text.lines().count()
        } else {
            text.lines().count().saturating_sub(1)
        };
        for (i, line) in text.lines().enumerate().take(complete_lines) {
            let corrupt = |reason: String| StoreError::Corrupt {
                path: log.clone(),
                line: i + 1,
                reason,
            };
            let j: Judgment = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            if j.item_id as usize >= session.manifest.items.len()
                || !(0..=MAX_SCORE as i64).contains(&j.score)
            {
                return Err(corrupt(format!("invalid judgment {line}")));
            }
            session.apply(&j);
        }
        Ok(session)
    }

    /// Validates `j`, appends it to the log and syncs, then applies it to
    /// `session`. A resubmission of the stored score is acknowledged without
    /// writing.
    pub fn submit(&self, session: &mut Session, j: Judgment) -> Result<Ack, StoreError> {
        if session.check(&j)?.is_none() {
            return Ok(session.ack(&j, true));
        }
        let log = self.dir(session.id())?.join(LOG);
        let mut line = serde_json::to_string(&j).expect("judgment serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .append(true)
            .open(&log)
            .map_err(io_err(&log))?;
        f.write_all(line.as_bytes()).map_err(io_err(&log))?;
        f.sync_data().map_err(io_err(&log))?;
        session.apply(&j);
        Ok(session.ack(&j, false))
    }

    /// Path of a session's judgment log.
    pub fn log_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.dir(id)?.join(LOG))
    }
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}
