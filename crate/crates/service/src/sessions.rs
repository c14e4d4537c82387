//! Live sessions backed by event logs.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::Utc;
use counsel_core::matching::MatchConfig;
use counsel_core::session::{
    DialogueEngine, ResponseBackend, SessionError, SessionState, Speaker, TurnOutcome,
};
use tokio::sync::Mutex;

use crate::events::{
    AgentMsgPayload, ClientMsgPayload, ErrorPayload, EventKind, EventLog, MatchSetPayload, PendingEvent,
    ReplayError, StageChangePayload, LOG_EXTENSION,
};

#[derive(Debug, thiserror::Error)]
pub enum TurnError {
    /// Nothing was recorded; the session is unchanged.
    #[error(transparent)]
    Rejected(SessionError),
    /// The client message and the failure were recorded.
    #[error(transparent)]
    Failed(SessionError),
    #[error("event log write failed: {0}")]
    Log(#[from] io::Error),
}

/// A session state paired with the log that persists it.
#[derive(Debug)]
pub struct LiveSession {
    state: SessionState,
    log: EventLog,
}

impl LiveSession {
    pub fn create(dir: &Path, engine: &DialogueEngine, config: MatchConfig) -> io::Result<Self> {
        let state = engine.new_session(config);
        let log = EventLog::create(dir, &state)?;
        Ok(Self { state, log })
    }

    pub fn open(path: &Path) -> Result<Self, ReplayError> {
        let (log, state) = EventLog::open(path)?;
        Ok(Self { state, log })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }

    /// Runs one client turn and appends its events before the new state
    /// becomes visible.
    pub fn turn(
        &mut self,
        engine: &DialogueEngine,
        backend: &dyn ResponseBackend,
        text: &str,
    ) -> Result<TurnOutcome, TurnError> {
        let mut next = self.state.clone();
        let result = engine.client_turn(&mut next, text, backend);
        if next.transcript.len() == self.state.transcript.len() {
            return Err(TurnError::Rejected(result.expect_err("a completed turn extends the transcript")));
        }
        let client = &next.transcript[self.state.transcript.len()];
        let mut events = vec![PendingEvent::new(
            EventKind::ClientMsg,
            &ClientMsgPayload { text: client.text.clone() },
            client.timestamp,
        )];
        match &result {
            Ok(outcome) => {
                let agent = next.transcript.last().expect("agent turn");
                debug_assert_eq!(agent.speaker, Speaker::Agent);
                if let Some(id) = &outcome.newly_matched {
                    events.push(PendingEvent::new(
                        EventKind::MatchSet,
                        &MatchSetPayload {
                            disorder_id: id.clone(),
                            similarity: outcome.similarity.similarity,
                        },
                        agent.timestamp,
                    ));
                }
                if outcome.stage_before != outcome.stage_after {
                    events.push(PendingEvent::new(
                        EventKind::StageChange,
                        &StageChangePayload {
                            from: outcome.stage_before,
                            to: outcome.stage_after,
                        },
                        agent.timestamp,
                    ));
                }
                events.push(PendingEvent::new(
                    EventKind::AgentMsg,
                    &AgentMsgPayload {
                        text: agent.text.clone(),
                        backend_id: outcome.reply.backend_id.clone(),
                        similarity: outcome.similarity,
                    },
                    agent.timestamp,
                ));
            }
            Err(err) => {
                let backend_id = match err {
                    SessionError::Backend(e) => Some(e.backend_id.clone()),
                    _ => None,
                };
                events.push(PendingEvent::new(
                    EventKind::Error,
                    &ErrorPayload {
                        message: err.to_string(),
                        backend_id,
                    },
                    Utc::now(),
                ));
            }
        }
        self.log.append(events)?;
        self.state = next;
        result.map_err(TurnError::Failed)
    }

    /// Closes the session. Returns `false` when it was already closed.
    pub fn close(&mut self) -> io::Result<bool> {
        if self.state.is_closed() {
            return Ok(false);
        }
        self.log
            .append(vec![PendingEvent::new(EventKind::Closed, &serde_json::json!({}), Utc::now())])?;
        self.state.close();
        Ok(true)
    }
}

pub type SessionHandle = Arc<Mutex<LiveSession>>;

/// All sessions of one data directory. Each session sits behind its own
/// mutex so its turns run one at a time while distinct sessions proceed in
/// parallel.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl SessionStore {
    pub fn sessions_dir(data_dir: &Path) -> PathBuf {
        data_dir.join("sessions")
    }

    /// Opens the store and replays every session log in it.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let dir = Self::sessions_dir(data_dir);
        std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let probe = dir.join(".write-probe");
        std::fs::write(&probe, b"")
            .and_then(|()| std::fs::remove_file(&probe))
            .map_err(|source| StoreError::Io {
                path: dir.clone(),
                source,
            })?;

        let entries = std::fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == LOG_EXTENSION))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for path in paths {
            let live = LiveSession::open(&path).map_err(|source| StoreError::Replay {
                path: path.clone(),
                source,
            })?;
            sessions.insert(live.state.session_id.clone(), Arc::new(Mutex::new(live)));
        }
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().expect("session map lock").get(id).cloned()
    }

    pub fn insert(&self, live: LiveSession) -> SessionHandle {
        let id = live.state.session_id.clone();
        let handle = Arc::new(Mutex::new(live));
        self.sessions.write().expect("session map lock").insert(id, handle.clone());
        handle
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("data directory {path} is not usable: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot recover {path}: {source}")]
    Replay { path: PathBuf, source: ReplayError },
}
