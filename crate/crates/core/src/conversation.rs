//! The conversational tier: durable, append-only, per-session chat history.
//!
//! Every message is one JSONL record with exactly the fields
//! `{session_id, seq, role, text, timestamp, metadata}`. The store assigns
//! `seq` (contiguous from 0 within a session) and `timestamp` (never earlier
//! than the session's previous message), so callers cannot race each other
//! into duplicate sequence numbers.
//!
//! Appends to one session are serialized; appends to different sessions only
//! share the short file write. Readers see a consistent prefix of each
//! session and never block on another session's writes.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::document::{validate_key, Metadata};
use crate::jsonl::{self, LogError, LogSink, NullSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    System,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::System => "system",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub session_id: String,
    pub seq: u64,
    pub role: Role,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub metadata: Metadata,
}

/// A message as submitted, before the store assigns `seq` and `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewMessage {
    pub role: Role,
    pub text: String,
    pub metadata: Metadata,
}

impl NewMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            metadata: Metadata::new(),
        }
    }

    pub fn with_metadata(mut self, metadata: Metadata) -> Self {
        self.metadata = metadata;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub message_count: usize,
}

#[derive(Debug, Error)]
pub enum ConversationError {
    #[error("session id must not be empty")]
    EmptySessionId,
    #[error("invalid message metadata key {0:?}")]
    InvalidMetadataKey(String),
    #[error("conversation log write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("conversation log out of order: session {session_id:?} expected seq {expected}, found {found}")]
    OutOfOrder {
        session_id: String,
        expected: u64,
        found: u64,
    },
}

#[derive(Default)]
struct Session {
    /// Serializes appends; held across the log write.
    append: Mutex<()>,
    messages: RwLock<Vec<Message>>,
}

pub struct ConversationStore {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    sink: Mutex<Box<dyn LogSink>>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for ConversationStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConversationStore")
            .field("sessions", &self.sessions.read().len())
            .finish_non_exhaustive()
    }
}

impl ConversationStore {
    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ConversationError> {
        Self::open_with(path, Arc::new(SystemClock), false)
    }

    /// Like [`open`](Self::open) with an explicit clock; `fsync` forces each
    /// append to stable storage before it is acknowledged.
    pub fn open_with(
        path: impl AsRef<Path>,
        clock: Arc<dyn Clock>,
        fsync: bool,
    ) -> Result<Self, ConversationError> {
        let (records, sink) = jsonl::open::<Message>(path.as_ref(), fsync)?;
        let store = Self::with_sink(Box::new(sink), clock);
        {
            let mut sessions = store.sessions.write();
            for message in records {
                let session = sessions.entry(message.session_id.clone()).or_default();
                let mut messages = session.messages.write();
                let expected = messages.len() as u64;
                if message.seq != expected {
                    return Err(ConversationError::OutOfOrder {
                        session_id: message.session_id,
                        expected,
                        found: message.seq,
                    });
                }
                messages.push(message);
            }
        }
        Ok(store)
    }

    /// A store that keeps nothing on disk.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::with_sink(Box::new(NullSink), clock)
    }

    /// A store writing to an arbitrary sink, starting empty.
    pub fn with_sink(sink: Box<dyn LogSink>, clock: Arc<dyn Clock>) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            sink: Mutex::new(sink),
            clock,
        }
    }

    fn session(&self, session_id: &str) -> Arc<Session> {
        if let Some(s) = self.sessions.read().get(session_id) {
            return Arc::clone(s);
        }
        Arc::clone(
            self.sessions
                .write()
                .entry(session_id.to_owned())
                .or_default(),
        )
    }

    pub fn append_message(
        &self,
        session_id: &str,
        role: Role,
        text: impl Into<String>,
        metadata: Metadata,
    ) -> Result<Message, ConversationError> {
        let mut out = self.append_batch(
            session_id,
            vec![NewMessage::new(role, text).with_metadata(metadata)],
        )?;
        Ok(out.pop().expect("one message appended"))
    }

    /// Appends several messages with consecutive seqs in one log write: either
    /// all become durable and visible, or none do.
    pub fn append_batch(
        &self,
        session_id: &str,
        batch: Vec<NewMessage>,
    ) -> Result<Vec<Message>, ConversationError> {
        if session_id.is_empty() {
            return Err(ConversationError::EmptySessionId);
        }
        for m in &batch {
            for key in m.metadata.keys() {
                validate_key(key)
                    .map_err(|_| ConversationError::InvalidMetadataKey(key.clone()))?;
            }
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let session = self.session(session_id);
        let _serial = session.append.lock();
        let (mut seq, mut last_ts) = {
            let messages = session.messages.read();
            (
                messages.len() as u64,
                messages.last().map_or(0, |m| m.timestamp),
            )
        };
        let now = self.clock.now_ms();
        let built: Vec<Message> = batch
            .into_iter()
            .map(|m| {
                let timestamp = now.max(last_ts);
                last_ts = timestamp;
                let message = Message {
                    session_id: session_id.to_owned(),
                    seq,
                    role: m.role,
                    text: m.text,
                    timestamp,
                    metadata: m.metadata,
                };
                seq += 1;
                message
            })
            .collect();
        self.sink
            .lock()
            .append(&jsonl::encode(&built))
            .map_err(ConversationError::Write)?;
        session.messages.write().extend(built.iter().cloned());
        Ok(built)
    }

    /// The last `min(last_n, len)` messages of a session, oldest first. An
    /// unknown session yields an empty list.
    pub fn get_history(&self, session_id: &str, last_n: usize) -> Vec<Message> {
        let Some(session) = self.sessions.read().get(session_id).cloned() else {
            return Vec::new();
        };
        let messages = session.messages.read();
        let start = messages.len().saturating_sub(last_n);
        messages[start..].to_vec()
    }

    /// Messages `[from_seq, from_seq + limit)` of a session.
    pub fn page(&self, session_id: &str, from_seq: u64, limit: usize) -> Vec<Message> {
        let Some(session) = self.sessions.read().get(session_id).cloned() else {
            return Vec::new();
        };
        let messages = session.messages.read();
        let start = (from_seq as usize).min(messages.len());
        let end = start.saturating_add(limit).min(messages.len());
        messages[start..end].to_vec()
    }

    pub fn session_len(&self, session_id: &str) -> usize {
        self.sessions
            .read()
            .get(session_id)
            .map_or(0, |s| s.messages.read().len())
    }

    /// Sessions holding at least one message, sorted by id.
    pub fn list_sessions(&self) -> Vec<SessionSummary> {
        let mut out: Vec<SessionSummary> = self
            .sessions
            .read()
            .iter()
            .map(|(id, s)| SessionSummary {
                session_id: id.clone(),
                message_count: s.messages.read().len(),
            })
            .filter(|s| s.message_count > 0)
            .collect();
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    pub fn total_messages(&self) -> usize {
        self.sessions
            .read()
            .values()
            .map(|s| s.messages.read().len())
            .sum()
    }
}
