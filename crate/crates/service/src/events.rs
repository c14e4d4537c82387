//! Append-only session event log.
//!
//! Each session owns one JSON-lines file. Events are numbered from 1 without
//! gaps, the first is always `created`, and nothing may follow `closed`. The
//! events of one client turn are written with a single write and fsync
//! before the turn is acknowledged, so the log never runs behind what a
//! client was told.
//!
//! A turn is committed once its `agent_msg` or `error` event is on disk.
//! Reading a log keeps only the committed prefix: a torn final line or the
//! unfinished events of an interrupted turn are dropped.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use counsel_core::matching::MatchConfig;
use counsel_core::session::{SessionState, SimilarityRecord, Speaker, Stage, Turn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const LOG_EXTENSION: &str = "jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    ClientMsg,
    AgentMsg,
    StageChange,
    MatchSet,
    Closed,
    Error,
}

impl EventKind {
    fn commits(self) -> bool {
        matches!(self, Self::Created | Self::AgentMsg | Self::Error | Self::Closed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedPayload {
    pub config: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMsgPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMsgPayload {
    pub text: String,
    pub backend_id: String,
    pub similarity: SimilarityRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageChangePayload {
    pub from: Stage,
    pub to: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSetPayload {
    pub disorder_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
}

/// An event not yet assigned a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingEvent {
    pub kind: EventKind,
    pub payload: Value,
    pub timestamp: DateTime<Utc>,
}

impl PendingEvent {
    pub fn new<P: Serialize>(kind: EventKind, payload: &P, timestamp: DateTime<Utc>) -> Self {
        Self {
            kind,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
            timestamp,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

impl ReplayError {
    fn corrupt(seq: u64, reason: impl Into<String>) -> Self {
        Self::CorruptLog { seq, reason: reason.into() }
    }
}

fn payload<T: for<'de> Deserialize<'de>>(event: &SessionEvent) -> Result<T, ReplayError> {
    serde_json::from_value(event.payload.clone())
        .map_err(|e| ReplayError::corrupt(event.seq, format!("bad {:?} payload: {e}", event.kind)))
}

/// Folds events into a session state, checking the log invariants.
pub fn fold_events(events: &[SessionEvent]) -> Result<SessionState, ReplayError> {
    let first = events.first().ok_or_else(|| ReplayError::corrupt(0, "log is empty"))?;
    if first.kind != EventKind::Created {
        return Err(ReplayError::corrupt(first.seq, "first event is not `created`"));
    }
    if first.seq != 1 {
        return Err(ReplayError::corrupt(first.seq, "log does not start at seq 1"));
    }
    let created: CreatedPayload = payload(first)?;
    let mut state = SessionState::with_id(first.session_id.clone(), created.config, first.timestamp);
    let mut in_turn = false;

    for pair in events.windows(2) {
        let (prev, event) = (&pair[0], &pair[1]);
        if event.seq != prev.seq + 1 {
            return Err(ReplayError::corrupt(event.seq, format!("expected seq {}", prev.seq + 1)));
        }
        if event.session_id != state.session_id {
            return Err(ReplayError::corrupt(event.seq, "event belongs to another session"));
        }
        if state.is_closed() {
            return Err(ReplayError::corrupt(event.seq, "event after `closed`"));
        }
        match event.kind {
            EventKind::Created => return Err(ReplayError::corrupt(event.seq, "duplicate `created`")),
            EventKind::ClientMsg => {
                if in_turn {
                    return Err(ReplayError::corrupt(event.seq, "turn started before the previous one ended"));
                }
                let p: ClientMsgPayload = payload(event)?;
                state.transcript.push(Turn {
                    speaker: Speaker::Client,
                    text: p.text,
                    timestamp: event.timestamp,
                });
                in_turn = true;
            }
            EventKind::MatchSet => {
                if !in_turn {
                    return Err(ReplayError::corrupt(event.seq, "`match_set` outside a turn"));
                }
                let p: MatchSetPayload = payload(event)?;
                state.matched_disorder = Some(p.disorder_id);
            }
            EventKind::StageChange => {
                if !in_turn {
                    return Err(ReplayError::corrupt(event.seq, "`stage_change` outside a turn"));
                }
                let p: StageChangePayload = payload(event)?;
                if p.from != state.stage || !p.from.can_transition_to(p.to) {
                    return Err(ReplayError::corrupt(
                        event.seq,
                        format!("invalid transition {:?} -> {:?} from {:?}", p.from, p.to, state.stage),
                    ));
                }
                state.stage = p.to;
            }
            EventKind::AgentMsg => {
                if !in_turn {
                    return Err(ReplayError::corrupt(event.seq, "`agent_msg` without a client message"));
                }
                let p: AgentMsgPayload = payload(event)?;
                state.similarity_history.push(p.similarity);
                state.transcript.push(Turn {
                    speaker: Speaker::Agent,
                    text: p.text,
                    timestamp: event.timestamp,
                });
                in_turn = false;
            }
            EventKind::Error => {
                if !in_turn {
                    return Err(ReplayError::corrupt(event.seq, "`error` without a client message"));
                }
                in_turn = false;
            }
            EventKind::Closed => {
                if in_turn {
                    return Err(ReplayError::corrupt(event.seq, "`closed` inside a turn"));
                }
                state.close();
            }
        }
    }
    Ok(state)
}

/// Committed events of a log file plus the byte length they occupy.
pub fn read_committed(path: &Path) -> Result<(Vec<SessionEvent>, u64), ReplayError> {
    let bytes = std::fs::read(path).map_err(|source| ReplayError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut events = Vec::new();
    let mut committed = (0usize, 0u64);
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let Some(end) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            // Torn final write.
            break;
        };
        let line = &bytes[offset..offset + end];
        offset += end + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let event: SessionEvent = serde_json::from_slice(line).map_err(|e| ReplayError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let commits = event.kind.commits();
        events.push(event);
        if commits {
            committed = (events.len(), offset as u64);
        }
    }
    events.truncate(committed.0);
    Ok((events, committed.1))
}

/// Reconstructs a session from its log file.
pub fn replay_session(path: impl AsRef<Path>) -> Result<SessionState, ReplayError> {
    let (events, _) = read_committed(path.as_ref())?;
    fold_events(&events)
}

/// Writer for one session's log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    session_id: String,
    next_seq: u64,
    len: u64,
}

impl EventLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.{LOG_EXTENSION}"))
    }

    /// Starts a new log with its `created` event.
    pub fn create(dir: &Path, state: &SessionState) -> io::Result<Self> {
        let path = Self::path_for(dir, &state.session_id);
        let file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        let mut log = Self {
            path,
            file,
            session_id: state.session_id.clone(),
            next_seq: 1,
            len: 0,
        };
        let created = CreatedPayload { config: state.config };
        log.append(vec![PendingEvent::new(EventKind::Created, &created, state.created_at)])?;
        Ok(log)
    }

    /// Reopens an existing log, discarding any uncommitted tail, and
    /// returns the replayed state.
    pub fn open(path: &Path) -> Result<(Self, SessionState), ReplayError> {
        let io_err = |source| ReplayError::Io {
            path: path.to_path_buf(),
            source,
        };
        let (events, len) = read_committed(path)?;
        let state = fold_events(&events)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err)?;
        if file.metadata().map_err(io_err)?.len() != len {
            file.set_len(len).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        let next_seq = events.last().map_or(1, |e| e.seq + 1);
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                session_id: state.session_id.clone(),
                next_seq,
                len,
            },
            state,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Writes the events in one batch and syncs them to disk. On failure
    /// the file is cut back to its previous length.
    pub fn append(&mut self, events: Vec<PendingEvent>) -> io::Result<Vec<SessionEvent>> {
        let mut buf = Vec::new();
        let mut written = Vec::with_capacity(events.len());
        for (i, pending) in events.into_iter().enumerate() {
            let event = SessionEvent {
                session_id: self.session_id.clone(),
                seq: self.next_seq + i as u64,
                kind: pending.kind,
                payload: pending.payload,
                timestamp: pending.timestamp,
            };
            serde_json::to_writer(&mut buf, &event)?;
            buf.push(b'\n');
            written.push(event);
        }
        let result = self.file.write_all(&buf).and_then(|()| self.file.sync_data());
        if let Err(err) = result {
            let _ = self.file.set_len(self.len);
            return Err(err);
        }
        self.len += buf.len() as u64;
        self.next_seq += written.len() as u64;
        Ok(written)
    }
}
