//! Session orchestration: transcript ingestion, user actions, write-ahead
//! persistence and recovery, independent of the transport.
//!
//! Each session appends to `<dir>/<session_id>.events`:
//!
//! ```text
//! #claimlens-events-v1
//! {"record":"utterance","utterance":{...}}
//! {"record":"event","event":{"seq":1,...}}
//! ```
//!
//! Records are appended and flushed before the state changes or any reply is
//! produced, so folding the file always yields a state the live session held.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::corpus::{read_file, ReportSchema, Utterance};
use crate::error::{Error, Result};
use crate::recommend::{suggest_for_field, SuggestionList};
use crate::segmentation::StandardQuestionSet;
use crate::tracker::{
    plan_keyword_action, plan_suggestion, plan_utterance, snapshot, KeywordAction, LogRecord,
    SessionEvent, SessionState, Snapshot, TrackerConfig,
};

pub const EVENTS_HEADER: &str = "#claimlens-events-v1";
/// Protocol version carried by `opened` replies.
pub const PROTOCOL_VERSION: &str = "claimlens-events-v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum UserAction {
    FillFieldRequest { field_id: String },
    ConfirmKeyword { record: u64 },
    RejectKeyword { record: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "control", rename_all = "snake_case")]
pub enum Control {
    /// Opens a fresh session, or reopens a persisted one by id.
    Open,
    Snapshot,
    Close,
    /// Re-sends every session event after `after_seq`.
    Resume {
        after_seq: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InboundBody {
    Transcript { utterance: Utterance },
    Action { action: UserAction },
    Control { control: Control },
}

/// A client message. `seq` is the client's own counter, echoed in replies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inbound {
    #[serde(default)]
    pub session_id: Option<String>,
    pub seq: u64,
    #[serde(flatten)]
    pub body: InboundBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutboundBody {
    Opened {
        version: String,
        snapshot: Snapshot,
    },
    Event {
        event: SessionEvent,
    },
    Suggestions {
        suggestions: SuggestionList,
    },
    Snapshot {
        snapshot: Snapshot,
    },
    Closed {
        snapshot: Snapshot,
    },
    Ack {
        in_reply_to: u64,
    },
    Error {
        in_reply_to: u64,
        code: String,
        message: String,
    },
}

/// A server message. `seq` increases strictly per session connection
/// lifetime; errors outside any session carry 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outbound {
    pub session_id: Option<String>,
    pub seq: u64,
    #[serde(flatten)]
    pub body: OutboundBody,
}

/// Stable machine-readable name of an error.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::UnknownSession(_) => "unknown_session",
        Error::UnknownRecord(_) => "unknown_record",
        Error::UnknownField(_) => "unknown_field",
        Error::UnsupportedField(_) => "unsupported_field",
        Error::InvalidTransition { .. } => "invalid_transition",
        Error::OutOfOrder { .. } => "out_of_order",
        Error::EmptyInput(_) => "empty_input",
        Error::VersionMismatch(_) => "version_mismatch",
        Error::MissingSection(_) => "missing_section",
        Error::Io { .. } => "io",
        Error::Parse { .. } | Error::Validation { .. } => "parse",
        _ => "invalid",
    }
}

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub sessions_dir: PathBuf,
    pub tracker: TrackerConfig,
    /// Sync appended records to disk before replying.
    pub fsync: bool,
}

struct Session {
    state: SessionState,
    log: File,
    out_seq: u64,
}

impl Session {
    fn append(&mut self, records: &[LogRecord], fsync: bool, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("log records serialize"));
            buf.push('\n');
        }
        self.log
            .write_all(buf.as_bytes())
            .and_then(|_| self.log.flush())
            .and_then(|_| if fsync { self.log.sync_data() } else { Ok(()) })
            .map_err(|e| Error::io(path, e))
    }

    fn out(&mut self, id: &str, body: OutboundBody) -> Outbound {
        self.out_seq += 1;
        Outbound {
            session_id: Some(id.to_string()),
            seq: self.out_seq,
            body,
        }
    }
}

/// Shared models plus the open sessions. Mutations of one session are
/// serialized by its own lock; sessions never share mutable state.
pub struct SessionManager {
    bundle: Arc<ModelBundle>,
    schema: Arc<ReportSchema>,
    sq: Arc<StandardQuestionSet>,
    options: ServiceOptions,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Reads a session log. A final line without its newline is a torn write
/// and is ignored; the returned length covers the complete lines only.
pub fn read_log(path: &Path) -> Result<(Vec<LogRecord>, usize)> {
    let text = read_file(path)?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let mut lines = text[..complete].lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == EVENTS_HEADER => {}
        Some((_, h)) => {
            return Err(Error::VersionMismatch(format!(
                "expected event log header `{EVENTS_HEADER}`, found `{h}`"
            )))
        }
        None => {
            return Err(Error::EmptyInput(format!(
                "{} has no header",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok((records, complete))
}

impl SessionManager {
    /// Fails when the bundle was not trained for the schema.
    pub fn new(
        bundle: Arc<ModelBundle>,
        schema: Arc<ReportSchema>,
        sq: Arc<StandardQuestionSet>,
        options: ServiceOptions,
    ) -> Result<Self> {
        bundle.check_schema(&schema)?;
        std::fs::create_dir_all(&options.sessions_dir)
            .map_err(|e| Error::io(&options.sessions_dir, e))?;
        Ok(SessionManager {
            bundle,
            schema,
            sq,
            options,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.options
            .sessions_dir
            .join(format!("{session_id}.events"))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub fn open_session(&self) -> Result<String> {
        let id = uuid::Uuid::new_v4().to_string();
        let path = self.log_path(&id);
        let mut log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(log, "{EVENTS_HEADER}")
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&path, e))?;
        let session = Session {
            state: SessionState::new(),
            log,
            out_seq: 0,
        };
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// Rebuilds a session from its persisted log, dropping a torn final line.
    /// An already open session is returned as is.
    pub fn reopen_session(&self, id: &str) -> Result<Snapshot> {
        if !valid_id(id) {
            return Err(Error::UnknownSession(id.to_string()));
        }
        let mut map = self.sessions.write().expect("session map lock");
        if let Some(s) = map.get(id) {
            return Ok(snapshot(&s.lock().expect("session lock").state));
        }
        let path = self.log_path(id);
        if !path.exists() {
            return Err(Error::UnknownSession(id.to_string()));
        }
        let (records, complete) = read_log(&path)?;
        let state = SessionState::replay(&records)?;
        let log = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        log.set_len(complete as u64)
            .map_err(|e| Error::io(&path, e))?;
        let snap = snapshot(&state);
        map.insert(
            id.to_string(),
            Arc::new(Mutex::new(Session {
                out_seq: state.events.len() as u64,
                state,
                log,
            })),
        );
        Ok(snap)
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot> {
        let s = self.session(id)?;
        let guard = s.lock().expect("session lock");
        Ok(snapshot(&guard.state))
    }

    /// Runs one utterance; the utterance and its events are on disk before
    /// the state changes. On error nothing is written or changed.
    pub fn handle_transcript_event(&self, id: &str, utt: &Utterance) -> Result<Vec<SessionEvent>> {
        let s = self.session(id)?;
        let mut guard = s.lock().expect("session lock");
        let events = plan_utterance(
            &guard.state,
            utt,
            &self.bundle,
            &self.sq,
            &self.options.tracker,
        )?;
        let mut records = vec![LogRecord::Utterance {
            utterance: utt.clone(),
        }];
        records.extend(events.iter().map(|e| LogRecord::Event { event: e.clone() }));
        guard.append(&records, self.options.fsync, &self.log_path(id))?;
        for r in &records {
            guard.state.apply_record(r)?;
        }
        Ok(events)
    }

    /// Applies a user action. A fill request returns its suggestions and
    /// logs them as an event; confirm and reject log the transition.
    pub fn handle_user_action(
        &self,
        id: &str,
        action: &UserAction,
    ) -> Result<(SessionEvent, Option<SuggestionList>)> {
        let s = self.session(id)?;
        let mut guard = s.lock().expect("session lock");
        let (event, list) = match action {
            UserAction::FillFieldRequest { field_id } => {
                let list = suggest_for_field(&guard.state, &self.schema, field_id)?;
                (plan_suggestion(&guard.state, list.clone()), Some(list))
            }
            UserAction::ConfirmKeyword { record } => (
                plan_keyword_action(&guard.state, *record, KeywordAction::Confirm)?,
                None,
            ),
            UserAction::RejectKeyword { record } => (
                plan_keyword_action(&guard.state, *record, KeywordAction::Reject)?,
                None,
            ),
        };
        guard.append(
            &[LogRecord::Event {
                event: event.clone(),
            }],
            self.options.fsync,
            &self.log_path(id),
        )?;
        guard.state.apply(&event)?;
        Ok((event, list))
    }

    /// Flushes and removes the session, returning its final snapshot.
    pub fn close_session(&self, id: &str) -> Result<Snapshot> {
        let s = self
            .sessions
            .write()
            .expect("session map lock")
            .remove(id)
            .ok_or_else(|| Error::UnknownSession(id.to_string()))?;
        let guard = s.lock().expect("session lock");
        guard
            .log
            .sync_all()
            .map_err(|e| Error::io(self.log_path(id), e))?;
        Ok(snapshot(&guard.state))
    }

    pub fn is_open(&self, id: &str) -> bool {
        self.sessions
            .read()
            .expect("session map lock")
            .contains_key(id)
    }

    /// Handles one wire message. Every message gets either its replies
    /// followed by an `ack`, or a single `error`.
    pub fn handle(&self, msg: &Inbound) -> Vec<Outbound> {
        match self.dispatch(msg) {
            Ok(out) => out,
            Err(e) => {
                let id = msg.session_id.clone();
                let seq = id
                    .as_deref()
                    .and_then(|id| self.session(id).ok())
                    .map_or(0, |s| {
                        let mut g = s.lock().expect("session lock");
                        g.out_seq += 1;
                        g.out_seq
                    });
                vec![Outbound {
                    session_id: id,
                    seq,
                    body: OutboundBody::Error {
                        in_reply_to: msg.seq,
                        code: error_code(&e).to_string(),
                        message: e.to_string(),
                    },
                }]
            }
        }
    }

    fn dispatch(&self, msg: &Inbound) -> Result<Vec<Outbound>> {
        let required = || {
            msg.session_id
                .clone()
                .ok_or_else(|| Error::UnknownSession(String::new()))
        };
        let mut bodies = Vec::new();
        let id = match &msg.body {
            InboundBody::Control {
                control: Control::Open,
            } => {
                let id = match &msg.session_id {
                    Some(id) => {
                        self.reopen_session(id)?;
                        id.clone()
                    }
                    None => self.open_session()?,
                };
                bodies.push(OutboundBody::Opened {
                    version: PROTOCOL_VERSION.to_string(),
                    snapshot: self.snapshot(&id)?,
                });
                id
            }
            InboundBody::Control {
                control: Control::Close,
            } => {
                let id = required()?;
                let s = self.session(&id)?;
                let snap = self.close_session(&id)?;
                let mut g = s.lock().expect("session lock");
                let closed = g.out(&id, OutboundBody::Closed { snapshot: snap });
                let ack = g.out(
                    &id,
                    OutboundBody::Ack {
                        in_reply_to: msg.seq,
                    },
                );
                return Ok(vec![closed, ack]);
            }
            InboundBody::Control {
                control: Control::Snapshot,
            } => {
                let id = required()?;
                bodies.push(OutboundBody::Snapshot {
                    snapshot: self.snapshot(&id)?,
                });
                id
            }
            InboundBody::Control {
                control: Control::Resume { after_seq },
            } => {
                let id = required()?;
                let s = self.session(&id)?;
                let g = s.lock().expect("session lock");
                bodies.extend(
                    g.state
                        .events
                        .iter()
                        .filter(|e| e.seq > *after_seq)
                        .map(|e| OutboundBody::Event { event: e.clone() }),
                );
                id
            }
            InboundBody::Transcript { utterance } => {
                let id = required()?;
                let events = self.handle_transcript_event(&id, utterance)?;
                bodies.extend(
                    events
                        .into_iter()
                        .map(|event| OutboundBody::Event { event }),
                );
                id
            }
            InboundBody::Action { action } => {
                let id = required()?;
                let (event, list) = self.handle_user_action(&id, action)?;
                match list {
                    Some(suggestions) => bodies.push(OutboundBody::Suggestions { suggestions }),
                    None => bodies.push(OutboundBody::Event { event }),
                }
                id
            }
        };
        bodies.push(OutboundBody::Ack {
            in_reply_to: msg.seq,
        });
        let s = self.session(&id)?;
        let mut g = s.lock().expect("session lock");
        Ok(bodies.into_iter().map(|b| g.out(&id, b)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_messages_use_flat_tagged_json() {
        let msg: Inbound = serde_json::from_str(
            r#"{"session_id":"a","seq":3,"type":"action","action":{"action":"confirm_keyword","record":2}}"#,
        )
        .unwrap();
        assert_eq!(
            msg.body,
            InboundBody::Action {
                action: UserAction::ConfirmKeyword { record: 2 }
            }
        );
        let open: Inbound =
            serde_json::from_str(r#"{"seq":1,"type":"control","control":{"control":"open"}}"#)
                .unwrap();
        assert_eq!(open.session_id, None);
        let out = Outbound {
            session_id: Some("a".into()),
            seq: 4,
            body: OutboundBody::Ack { in_reply_to: 3 },
        };
        assert_eq!(
            serde_json::to_string(&out).unwrap(),
            r#"{"session_id":"a","seq":4,"type":"ack","in_reply_to":3}"#
        );
    }

    #[test]
    fn torn_final_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.events");
        let rec = LogRecord::Utterance {
            utterance: Utterance::new(0, crate::corpus::Speaker::Assessor, "hello"),
        };
        let line = serde_json::to_string(&rec).unwrap();
        std::fs::write(&path, format!("{EVENTS_HEADER}\n{line}\n{}", &line[..10])).unwrap();
        let (records, complete) = read_log(&path).unwrap();
        assert_eq!(records, vec![rec]);
        assert_eq!(complete, EVENTS_HEADER.len() + line.len() + 2);
        std::fs::write(&path, "#claimlens-events-v0\n").unwrap();
        assert!(matches!(read_log(&path), Err(Error::VersionMismatch(_))));
        std::fs::write(&path, format!("{EVENTS_HEADER}\n{{bad}}\n")).unwrap();
        assert!(matches!(read_log(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn session_ids_are_restricted() {
        assert!(valid_id("3f0c-ab_9"));
        assert!(!valid_id("../x"));
        assert!(!valid_id(""));
    }
}
