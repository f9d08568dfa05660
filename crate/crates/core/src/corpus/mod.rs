//! Data model, file ingestion, synthetic corpus generation and ASR-noise
//! simulation.
//!
//! Transcripts replace live speech recognition: each utterance already
//! carries its speaker role. Generated corpora substitute for private
//! assessment recordings and come with full gold annotations.

pub mod dates;
mod generate;
mod io;
mod kbgen;
mod noise;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use generate::mix_seed;
pub use generate::{generate_corpus, GeneratorConfig};
pub use io::{
    load_corpus, load_gold_case, load_kb, load_schema, load_transcript, parse_kb, parse_transcript,
    save_corpus, save_gold_case, save_kb, save_schema, save_transcript, transcript_to_string,
};
pub(crate) use io::{parse_records, read_file, render_records, write_file};
pub use kbgen::{edit_distance, generate_kb, KbGenConfig};
pub use noise::{corrupt_text, NoiseConfig, NoiseOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    Assessor,
    Claimant,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::Assessor => f.write_str("Assessor"),
            Speaker::Claimant => f.write_str("Claimant"),
        }
    }
}

/// One turn of the conversation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: u64,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp_ms: u64,
}

impl Utterance {
    pub fn new(index: u64, speaker: Speaker, text: impl Into<String>) -> Self {
        Utterance {
            index,
            speaker,
            text: text.into(),
            timestamp_ms: index * 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Checks the dialogue invariants: non-empty, gap-free increasing
    /// indices starting at the first utterance's index, non-blank text.
    pub fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::EmptyInput(format!(
                "dialogue `{}` has no utterances",
                self.id
            )));
        }
        let first = self.utterances[0].index;
        for (pos, utt) in self.utterances.iter().enumerate() {
            if utt.index != first + pos as u64 {
                return Err(Error::validation(
                    pos + 1,
                    format!(
                        "utterance index {} breaks the contiguous sequence",
                        utt.index
                    ),
                ));
            }
            if utt.text.trim().is_empty() {
                return Err(Error::validation(pos + 1, "utterance text is blank"));
            }
        }
        Ok(())
    }

    pub fn get(&self, index: u64) -> Option<&Utterance> {
        let first = self.utterances.first()?.index;
        index
            .checked_sub(first)
            .and_then(|offset| self.utterances.get(offset as usize))
    }
}

/// Keyword entity types. Non-entities are tagged `O` by the extractor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Addr,
    Hos,
    Dis,
    Date,
    Exam,
}

impl EntityType {
    pub const ALL: [EntityType; 5] = [
        EntityType::Addr,
        EntityType::Hos,
        EntityType::Dis,
        EntityType::Date,
        EntityType::Exam,
    ];

    /// Types that can live in the knowledge base.
    pub const KB_TYPES: [EntityType; 4] = [
        EntityType::Addr,
        EntityType::Hos,
        EntityType::Dis,
        EntityType::Exam,
    ];

    pub fn index(self) -> usize {
        match self {
            EntityType::Addr => 0,
            EntityType::Hos => 1,
            EntityType::Dis => 2,
            EntityType::Date => 3,
            EntityType::Exam => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Addr => "Addr",
            EntityType::Hos => "Hos",
            EntityType::Dis => "Dis",
            EntityType::Date => "Date",
            EntityType::Exam => "Exam",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown entity type `{s}`")))
    }
}

/// Canonical knowledge-base entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: String,
    pub etype: EntityType,
    pub canonical: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl KbEntry {
    /// Canonical name followed by the aliases.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub field_id: String,
    pub etype: EntityType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub topic_id: String,
    pub display_name: String,
    pub fields: Vec<FieldSpec>,
}

/// Report layout: ordered topics, each with typed fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSchema {
    pub topics: Vec<TopicSpec>,
}

/// A field resolved together with the topic that owns it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldRef {
    pub field_id: String,
    pub topic_id: String,
    pub etype: EntityType,
}

impl ReportSchema {
    pub fn new(topics: Vec<TopicSpec>) -> Result<Self> {
        let schema = ReportSchema { topics };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Invalid("report schema has no topics".into()));
        }
        let mut topics = BTreeSet::new();
        let mut fields = BTreeSet::new();
        for topic in &self.topics {
            if !topics.insert(topic.topic_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "duplicate topic id `{}`",
                    topic.topic_id
                )));
            }
            for field in &topic.fields {
                if !fields.insert(field.field_id.as_str()) {
                    return Err(Error::Invalid(format!(
                        "duplicate field id `{}`",
                        field.field_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn topic_ids(&self) -> Vec<String> {
        self.topics.iter().map(|t| t.topic_id.clone()).collect()
    }

    pub fn topic_index(&self, topic_id: &str) -> Option<usize> {
        self.topics.iter().position(|t| t.topic_id == topic_id)
    }

    pub fn field(&self, field_id: &str) -> Option<FieldRef> {
        self.fields().find(|f| f.field_id == field_id)
    }

    pub fn field_for(&self, topic_id: &str, etype: EntityType) -> Option<FieldRef> {
        self.fields()
            .find(|f| f.topic_id == topic_id && f.etype == etype)
    }

    /// All fields in schema order.
    pub fn fields(&self) -> impl Iterator<Item = FieldRef> + '_ {
        self.topics.iter().flat_map(|t| {
            t.fields.iter().map(move |f| FieldRef {
                field_id: f.field_id.clone(),
                topic_id: t.topic_id.clone(),
                etype: f.etype,
            })
        })
    }

    /// The six-topic layout of a medical insurance assessment report.
    pub fn default_schema() -> Self {
        use EntityType::*;
        let topic = |id: &str, name: &str, fields: &[(&str, EntityType)]| TopicSpec {
            topic_id: id.to_string(),
            display_name: name.to_string(),
            fields: fields
                .iter()
                .map(|(f, t)| FieldSpec {
                    field_id: f.to_string(),
                    etype: *t,
                })
                .collect(),
        };
        ReportSchema {
            topics: vec![
                topic(
                    "resident_info",
                    "Resident Information",
                    &[("resident_addr", Addr), ("resident_date", Date)],
                ),
                topic(
                    "work_record",
                    "Work Record",
                    &[("work_addr", Addr), ("work_date", Date)],
                ),
                topic(
                    "diagnostic_record",
                    "Diagnostic Record",
                    &[("diag_date", Date), ("diag_hos", Hos), ("diag_exam", Exam)],
                ),
                topic(
                    "disease_history",
                    "Disease History",
                    &[
                        ("history_date", Date),
                        ("history_hos", Hos),
                        ("history_exam", Exam),
                        ("history_dis", Dis),
                    ],
                ),
                topic(
                    "medical_insurance",
                    "Medical Insurance",
                    &[("medical_addr", Addr), ("medical_date", Date)],
                ),
                topic(
                    "commercial_insurance",
                    "Commercial Insurance",
                    &[("commercial_date", Date)],
                ),
            ],
        }
    }
}

/// How a gold span resolves: to a knowledge-base entry or, for dates, to a
/// verbatim normalized value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldLink {
    Kb { id: String },
    Verbatim { value: String },
}

/// Annotated entity mention. Offsets are UTF-8 byte offsets into the
/// utterance text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub utterance_index: u64,
    pub char_start: usize,
    pub char_end: usize,
    pub etype: EntityType,
    pub surface: String,
    pub link: GoldLink,
}

/// A dialogue with its full annotation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldCase {
    pub dialogue: Dialogue,
    pub gold_spans: Vec<GoldSpan>,
    pub gold_topics: BTreeMap<u64, String>,
    pub gold_questions: BTreeMap<u64, bool>,
    pub gold_negations: BTreeMap<u64, bool>,
    pub gold_report: BTreeMap<String, Vec<String>>,
}

impl GoldCase {
    pub fn validate(&self) -> Result<()> {
        self.dialogue.validate()?;
        for span in &self.gold_spans {
            let utt = self.dialogue.get(span.utterance_index).ok_or_else(|| {
                Error::Invalid(format!(
                    "gold span references missing utterance {}",
                    span.utterance_index
                ))
            })?;
            match utt.text.get(span.char_start..span.char_end) {
                Some(s) if s == span.surface => {}
                _ => {
                    return Err(Error::Invalid(format!(
                        "gold span {}..{} in utterance {} does not match `{}`",
                        span.char_start, span.char_end, span.utterance_index, span.surface
                    )))
                }
            }
        }
        Ok(())
    }

    /// Every gold report value of the given type, over all fields.
    pub fn report_values(&self, schema: &ReportSchema, etype: EntityType) -> BTreeSet<String> {
        schema
            .fields()
            .filter(|f| f.etype == etype)
            .filter_map(|f| self.gold_report.get(&f.field_id))
            .flatten()
            .cloned()
            .collect()
    }
}
