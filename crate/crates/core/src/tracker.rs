//! Keyword lifecycle tracking. Keywords from assessor questions stay
//! tentative until the claimant's next turn confirms or negates them.
//!
//! Every state change is expressed as a [`LogRecord`]: the observed
//! utterance followed by the events it caused. Live processing applies the
//! same records that are persisted, so folding any prefix of a log yields
//! exactly the live state at that point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::corpus::{EntityType, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::linking::{LinkMethod, LinkResult, DEFAULT_TAU};
use crate::recommend::SuggestionList;
use crate::segmentation::{
    assign_topic_with, LexicalScorer, Scorer, ScorerKind, SegmenterConfig, StandardQuestionSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeywordState {
    Tentative,
    Confirmed,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordRecord {
    /// Position in the ledger, starting at 1.
    pub id: u64,
    pub value: String,
    pub etype: EntityType,
    pub topic: Option<String>,
    pub utterance_index: u64,
    pub state: KeywordState,
    pub link: LinkResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The claimant's answer to the question was negative.
    Negated,
    /// Mentioned inside a negative claimant turn.
    Suppressed,
    /// A new question arrived before the claimant answered.
    Replaced,
    /// Rejected by the user.
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TopicChanged,
    KeywordTentative,
    KeywordConfirmed,
    KeywordDropped,
    SuggestionMade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventBody {
    TopicChanged {
        from: Option<String>,
        to: Option<String>,
    },
    KeywordTentative {
        record: KeywordRecord,
    },
    KeywordConfirmed {
        record: KeywordRecord,
    },
    KeywordDropped {
        record: KeywordRecord,
        reason: DropReason,
    },
    SuggestionMade {
        suggestions: SuggestionList,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Utterance that caused the event; `None` for user actions.
    pub utterance_index: Option<u64>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        match self.body {
            EventBody::TopicChanged { .. } => EventKind::TopicChanged,
            EventBody::KeywordTentative { .. } => EventKind::KeywordTentative,
            EventBody::KeywordConfirmed { .. } => EventKind::KeywordConfirmed,
            EventBody::KeywordDropped { .. } => EventKind::KeywordDropped,
            EventBody::SuggestionMade { .. } => EventKind::SuggestionMade,
        }
    }

    pub fn record(&self) -> Option<&KeywordRecord> {
        match &self.body {
            EventBody::KeywordTentative { record }
            | EventBody::KeywordConfirmed { record }
            | EventBody::KeywordDropped { record, .. } => Some(record),
            _ => None,
        }
    }
}

/// One persisted line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Utterance { utterance: Utterance },
    Event { event: SessionEvent },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// With the gates off every extracted keyword is confirmed at once.
    pub dst_enabled: bool,
    pub link_tau: f64,
    pub segmenter: SegmenterConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            dst_enabled: true,
            link_tau: DEFAULT_TAU,
            segmenter: SegmenterConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub current_topic: Option<String>,
    /// Ids of tentative records waiting for the claimant's answer.
    pub pending: Vec<u64>,
    /// Every record ever created, addressed by `id - 1`.
    pub ledger: Vec<KeywordRecord>,
    pub last_assessor: Option<String>,
    pub last_claimant: Option<String>,
    pub last_index: Option<u64>,
    pub events: Vec<SessionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordView {
    pub id: u64,
    pub value: String,
    pub topic: Option<String>,
    pub utterance_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub current_topic: Option<String>,
    /// Confirmed keywords per entity type, most recent first. All five
    /// types are present.
    pub confirmed: BTreeMap<EntityType, Vec<KeywordView>>,
    pub pending_count: usize,
    pub event_count: usize,
    pub last_index: Option<u64>,
}

/// A user action that changes keyword state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeywordAction {
    Confirm,
    Reject,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    pub fn record(&self, id: u64) -> Result<&KeywordRecord> {
        id.checked_sub(1)
            .and_then(|i| self.ledger.get(i as usize))
            .ok_or(Error::UnknownRecord(id))
    }

    pub fn count(&self, state: KeywordState) -> usize {
        self.ledger.iter().filter(|r| r.state == state).count()
    }

    /// Records an utterance as seen: index and two-round history.
    pub fn observe(&mut self, utt: &Utterance) -> Result<()> {
        if let Some(last) = self.last_index {
            if utt.index <= last {
                return Err(Error::OutOfOrder {
                    index: utt.index,
                    last,
                });
            }
        }
        self.last_index = Some(utt.index);
        match utt.speaker {
            Speaker::Assessor => self.last_assessor = Some(utt.text.clone()),
            Speaker::Claimant => self.last_claimant = Some(utt.text.clone()),
        }
        Ok(())
    }

    /// Applies one event. Sequence numbers and record ids must continue the
    /// current state.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<()> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(Error::Invalid(format!(
                "event sequence {} does not follow {}",
                event.seq,
                expected - 1
            )));
        }
        match &event.body {
            EventBody::TopicChanged { to, .. } => self.current_topic = to.clone(),
            EventBody::SuggestionMade { .. } => {}
            EventBody::KeywordTentative { record }
            | EventBody::KeywordConfirmed { record }
            | EventBody::KeywordDropped { record, .. } => {
                let slot = record.id as usize;
                if slot == self.ledger.len() + 1 {
                    self.ledger.push(record.clone());
                } else if slot >= 1 && slot <= self.ledger.len() {
                    self.ledger[slot - 1] = record.clone();
                } else {
                    return Err(Error::UnknownRecord(record.id));
                }
                self.pending.retain(|&id| id != record.id);
                if record.state == KeywordState::Tentative {
                    self.pending.push(record.id);
                }
            }
        }
        self.events.push(event.clone());
        Ok(())
    }

    pub fn apply_record(&mut self, record: &LogRecord) -> Result<()> {
        match record {
            LogRecord::Utterance { utterance } => self.observe(utterance),
            LogRecord::Event { event } => self.apply(event),
        }
    }

    /// Folds a log from an empty state.
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Result<Self> {
        let mut state = SessionState::new();
        for r in records {
            state.apply_record(r)?;
        }
        Ok(state)
    }
}

/// Pure read of the displayable state.
pub fn snapshot(state: &SessionState) -> Snapshot {
    let mut confirmed: BTreeMap<EntityType, Vec<KeywordView>> =
        EntityType::ALL.iter().map(|&t| (t, Vec::new())).collect();
    for r in state
        .ledger
        .iter()
        .filter(|r| r.state == KeywordState::Confirmed)
    {
        confirmed.entry(r.etype).or_default().push(KeywordView {
            id: r.id,
            value: r.value.clone(),
            topic: r.topic.clone(),
            utterance_index: r.utterance_index,
        });
    }
    for list in confirmed.values_mut() {
        list.sort_by(|a, b| {
            b.utterance_index
                .cmp(&a.utterance_index)
                .then(b.id.cmp(&a.id))
        });
    }
    Snapshot {
        current_topic: state.current_topic.clone(),
        confirmed,
        pending_count: state.pending.len(),
        event_count: state.events.len(),
        last_index: state.last_index,
    }
}

/// Linked keyword candidate of one utterance.
#[derive(Clone, Debug, PartialEq)]
struct Mention {
    value: String,
    etype: EntityType,
    link: LinkResult,
}

/// Accumulates the events of one step against a scratch view of the
/// ledger, so planning never mutates the live state.
struct Planner<'a> {
    state: &'a SessionState,
    seq: u64,
    utterance_index: Option<u64>,
    /// Records changed or created by this step, by id.
    touched: BTreeMap<u64, KeywordRecord>,
    pending: Vec<u64>,
    topic: Option<String>,
    events: Vec<SessionEvent>,
}

impl<'a> Planner<'a> {
    fn new(state: &'a SessionState, utterance_index: Option<u64>) -> Self {
        Planner {
            state,
            seq: state.next_seq(),
            utterance_index,
            touched: BTreeMap::new(),
            pending: state.pending.clone(),
            topic: state.current_topic.clone(),
            events: Vec::new(),
        }
    }

    fn get(&self, id: u64) -> Result<KeywordRecord> {
        match self.touched.get(&id) {
            Some(r) => Ok(r.clone()),
            None => self.state.record(id).cloned(),
        }
    }

    fn ledger_len(&self) -> u64 {
        let created = self
            .touched
            .keys()
            .filter(|&&id| id as usize > self.state.ledger.len())
            .count();
        (self.state.ledger.len() + created) as u64
    }

    fn emit(&mut self, body: EventBody) {
        if let Some(r) = match &body {
            EventBody::KeywordTentative { record }
            | EventBody::KeywordConfirmed { record }
            | EventBody::KeywordDropped { record, .. } => Some(record.clone()),
            _ => None,
        } {
            self.pending.retain(|&id| id != r.id);
            if r.state == KeywordState::Tentative {
                self.pending.push(r.id);
            }
            self.touched.insert(r.id, r);
        }
        if let EventBody::TopicChanged { to, .. } = &body {
            self.topic = to.clone();
        }
        self.events.push(SessionEvent {
            seq: self.seq,
            utterance_index: self.utterance_index,
            body,
        });
        self.seq += 1;
    }

    fn transition(&mut self, id: u64, state: KeywordState, reason: DropReason) -> Result<()> {
        let mut r = self.get(id)?;
        r.state = state;
        let body = match state {
            KeywordState::Confirmed => EventBody::KeywordConfirmed { record: r },
            KeywordState::Dropped => EventBody::KeywordDropped { record: r, reason },
            KeywordState::Tentative => EventBody::KeywordTentative { record: r },
        };
        self.emit(body);
        Ok(())
    }

    fn resolve_pending(&mut self, state: KeywordState, reason: DropReason) -> Result<()> {
        for id in self.pending.clone() {
            self.transition(id, state, reason)?;
        }
        Ok(())
    }

    /// Earliest live record with the same value, type and topic.
    fn duplicate_of(&self, m: &Mention) -> Result<Option<KeywordRecord>> {
        for id in 1..=self.ledger_len() {
            let r = self.get(id)?;
            if r.state != KeywordState::Dropped
                && r.value == m.value
                && r.etype == m.etype
                && r.topic == self.topic
            {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }

    fn route(
        &mut self,
        m: Mention,
        target: KeywordState,
        reason: DropReason,
        index: u64,
    ) -> Result<()> {
        if let Some(mut r) = self.duplicate_of(&m)? {
            match (r.state, target) {
                (_, KeywordState::Dropped) => {}
                (KeywordState::Confirmed, _) => {
                    r.utterance_index = index;
                    self.emit(EventBody::KeywordConfirmed { record: r });
                }
                (_, state) => {
                    r.utterance_index = index;
                    r.state = state;
                    let body = if state == KeywordState::Confirmed {
                        EventBody::KeywordConfirmed { record: r }
                    } else {
                        EventBody::KeywordTentative { record: r }
                    };
                    self.emit(body);
                }
            }
            return Ok(());
        }
        let record = KeywordRecord {
            id: self.ledger_len() + 1,
            value: m.value,
            etype: m.etype,
            topic: self.topic.clone(),
            utterance_index: index,
            state: target,
            link: m.link,
        };
        let body = match target {
            KeywordState::Tentative => EventBody::KeywordTentative { record },
            KeywordState::Confirmed => EventBody::KeywordConfirmed { record },
            KeywordState::Dropped => EventBody::KeywordDropped { record, reason },
        };
        self.emit(body);
        Ok(())
    }
}

/// The segmentation scorer selected by `cfg`, taken from the bundle when
/// it is the trained one.
pub fn segment_scorer<'a>(
    models: &'a ModelBundle,
    cfg: &SegmenterConfig,
) -> Result<&'a dyn Scorer> {
    match cfg.scorer {
        ScorerKind::Lexical => Ok(&LexicalScorer),
        ScorerKind::Trainable => models
            .seg
            .as_ref()
            .map(|s| s as &dyn Scorer)
            .ok_or_else(|| Error::MissingSection("seg".into())),
    }
}

fn mentions(utt: &Utterance, models: &ModelBundle, tau: f64) -> Vec<Mention> {
    models
        .tagger
        .extract(utt)
        .into_iter()
        .map(|span| {
            (
                span.etype,
                models.index.link(span.etype, &span.surface, tau),
            )
        })
        .filter(|(_, link)| link.method != LinkMethod::Rejected)
        .map(|(etype, link)| Mention {
            value: link.normalized_value.clone(),
            etype,
            link,
        })
        .collect()
}

/// Computes the events an utterance causes without touching `state`.
pub fn plan_utterance(
    state: &SessionState,
    utt: &Utterance,
    models: &ModelBundle,
    sq: &StandardQuestionSet,
    cfg: &TrackerConfig,
) -> Result<Vec<SessionEvent>> {
    if let Some(last) = state.last_index {
        if utt.index <= last {
            return Err(Error::OutOfOrder {
                index: utt.index,
                last,
            });
        }
    }
    if utt.text.trim().is_empty() {
        return Err(Error::EmptyInput(format!(
            "utterance {} has blank text",
            utt.index
        )));
    }
    let mut p = Planner::new(state, Some(utt.index));
    if utt.speaker == Speaker::Assessor {
        let a = assign_topic_with(
            segment_scorer(models, &cfg.segmenter)?,
            utt,
            state.current_topic.as_deref(),
            sq,
            &cfg.segmenter,
        )?;
        if a.topic_id != state.current_topic {
            p.emit(EventBody::TopicChanged {
                from: state.current_topic.clone(),
                to: a.topic_id,
            });
        }
    }
    let found = mentions(utt, models, cfg.link_tau);
    if !cfg.dst_enabled {
        for m in found {
            p.route(
                m,
                KeywordState::Confirmed,
                DropReason::Suppressed,
                utt.index,
            )?;
        }
        return Ok(p.events);
    }
    match utt.speaker {
        Speaker::Assessor => {
            let q = models
                .active_qid()
                .classify(&utt.text, p.topic.as_deref())?;
            let target = if q.is_question {
                p.resolve_pending(KeywordState::Dropped, DropReason::Replaced)?;
                KeywordState::Tentative
            } else {
                KeywordState::Confirmed
            };
            for m in found {
                p.route(m, target, DropReason::Suppressed, utt.index)?;
            }
        }
        Speaker::Claimant => {
            let n = models.neg.classify(
                state.last_assessor.as_deref().unwrap_or(""),
                state.last_claimant.as_deref().unwrap_or(""),
                &utt.text,
            )?;
            let (pending, own) = if n.is_negative {
                (KeywordState::Dropped, KeywordState::Dropped)
            } else {
                (KeywordState::Confirmed, KeywordState::Confirmed)
            };
            p.resolve_pending(pending, DropReason::Negated)?;
            for m in found {
                p.route(m, own, DropReason::Suppressed, utt.index)?;
            }
        }
    }
    Ok(p.events)
}

/// Runs one utterance through topic assignment, extraction, linking and the
/// question/negation gates, applies the result and returns its events. On
/// error the state is unchanged.
pub fn process_utterance(
    state: &mut SessionState,
    utt: &Utterance,
    models: &ModelBundle,
    sq: &StandardQuestionSet,
    cfg: &TrackerConfig,
) -> Result<Vec<SessionEvent>> {
    let events = plan_utterance(state, utt, models, sq, cfg)?;
    state.observe(utt)?;
    for e in &events {
        state.apply(e)?;
    }
    Ok(events)
}

/// Manual confirmation or rejection of a record. Only tentative records can
/// be confirmed; tentative and confirmed records can be rejected.
pub fn plan_keyword_action(
    state: &SessionState,
    record_id: u64,
    action: KeywordAction,
) -> Result<SessionEvent> {
    let r = state.record(record_id)?;
    let mut p = Planner::new(state, None);
    match (action, r.state) {
        (KeywordAction::Confirm, KeywordState::Tentative) => {
            p.transition(record_id, KeywordState::Confirmed, DropReason::Rejected)?
        }
        (KeywordAction::Reject, KeywordState::Tentative | KeywordState::Confirmed) => {
            p.transition(record_id, KeywordState::Dropped, DropReason::Rejected)?
        }
        (action, from) => {
            return Err(Error::InvalidTransition {
                record: record_id,
                message: format!("cannot {action:?} a {from:?} record").to_lowercase(),
            })
        }
    }
    Ok(p.events.remove(0))
}

pub fn apply_keyword_action(
    state: &mut SessionState,
    record_id: u64,
    action: KeywordAction,
) -> Result<SessionEvent> {
    let e = plan_keyword_action(state, record_id, action)?;
    state.apply(&e)?;
    Ok(e)
}

pub fn plan_suggestion(state: &SessionState, suggestions: SuggestionList) -> SessionEvent {
    SessionEvent {
        seq: state.next_seq(),
        utterance_index: None,
        body: EventBody::SuggestionMade { suggestions },
    }
}

/// Runs a whole dialogue through a fresh state.
pub fn run_dialogue(
    utterances: &[Utterance],
    models: &ModelBundle,
    sq: &StandardQuestionSet,
    cfg: &TrackerConfig,
) -> Result<SessionState> {
    let mut state = SessionState::new();
    for u in utterances {
        process_utterance(&mut state, u, models, sq, cfg)?;
    }
    Ok(state)
}
