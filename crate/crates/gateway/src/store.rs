//! In-memory session registry backed by a directory of JSON snapshots.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use prefsearch::render::Family;
use prefsearch::{SessionSnapshot, SessionState};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::api::ApiSessionView;

/// Idempotency keys remembered per session.
const REMEMBERED_REPLIES: usize = 128;

/// On-disk form: the engine snapshot plus the stimulus family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub family: Family,
    pub session: SessionSnapshot,
}

pub struct SlotState {
    pub session: SessionState,
    replies: HashMap<String, ApiSessionView>,
    reply_order: VecDeque<String>,
}

impl SlotState {
    pub fn reply_for(&self, key: &str) -> Option<&ApiSessionView> {
        self.replies.get(key)
    }

    pub fn remember(&mut self, key: String, view: ApiSessionView) {
        if self.replies.insert(key.clone(), view).is_none() {
            self.reply_order.push_back(key);
        }
        while self.reply_order.len() > REMEMBERED_REPLIES {
            if let Some(old) = self.reply_order.pop_front() {
                self.replies.remove(&old);
            }
        }
    }
}

/// One session. The mutex serializes all mutations of that session.
pub struct Slot {
    pub family: Family,
    pub state: Mutex<SlotState>,
}

pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            dir: None,
        }
    }

    /// Opens `dir` (creating it if needed) and restores every `*.json`
    /// snapshot in it. Files that fail to load are returned with the reason
    /// and otherwise skipped.
    pub fn open(dir: &Path) -> io::Result<(Self, Vec<(PathBuf, String)>)> {
        std::fs::create_dir_all(dir)?;
        let store = Self {
            sessions: RwLock::new(HashMap::new()),
            dir: Some(dir.to_path_buf()),
        };
        let mut skipped = Vec::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            match load(&path) {
                Ok((family, session)) => {
                    store.insert(family, session);
                }
                Err(reason) => skipped.push((path, reason)),
            }
        }
        Ok((store, skipped))
    }

    pub fn insert(&self, family: Family, session: SessionState) -> Arc<Slot> {
        let id = session.id().to_string();
        let slot = Arc::new(Slot {
            family,
            state: Mutex::new(SlotState {
                session,
                replies: HashMap::new(),
                reply_order: VecDeque::new(),
            }),
        });
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, slot.clone());
        slot
    }

    pub fn get(&self, id: &str) -> Option<Arc<Slot>> {
        self.sessions.read().expect("session map poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}

fn load(path: &Path) -> Result<(Family, SessionState), String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let stored: StoredSession = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let session = SessionState::restore(stored.session).map_err(|e| e.to_string())?;
    Ok((stored.family, session))
}

/// Writes `<dir>/<id>.json` through a temporary file and a rename so a crash
/// never leaves a truncated snapshot.
pub fn persist(dir: &Path, family: Family, session: &SessionState) -> io::Result<()> {
    let stored = StoredSession {
        family,
        session: session.snapshot(),
    };
    let body = serde_json::to_vec_pretty(&stored)?;
    let path = dir.join(format!("{}.json", session.id()));
    let tmp = dir.join(format!(".{}.json.tmp", session.id()));
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, &path)
}
