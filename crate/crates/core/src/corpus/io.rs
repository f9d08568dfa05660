//! Line-delimited file formats. Every file starts with the version header,
//! followed by one JSON record per line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::kbgen::edit_distance;
use super::{
    Dialogue, EntityType, GoldCase, GoldSpan, KbEntry, ReportSchema, Speaker, TopicSpec, Utterance,
};
use crate::error::{Error, Result};
use crate::FORMAT_HEADER;

const TRANSCRIPT_FILE: &str = "transcript.jsonl";
const ANNOTATIONS_FILE: &str = "annotations.jsonl";
const REPORT_FILE: &str = "report.jsonl";

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses a versioned record file into `(line number, record)` pairs. Blank
/// lines are skipped; line numbers are 1-based physical lines.
pub(crate) fn parse_records<T: DeserializeOwned>(
    text: &str,
    header: &str,
) -> Result<Vec<(usize, T)>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("file is empty".into()));
    }
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == header => {}
        Some((_, first)) => {
            return Err(Error::parse(
                1,
                format!("expected header `{header}`, found `{first}`"),
            ))
        }
        None => unreachable!("non-empty text has a first line"),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        records.push((idx + 1, record));
    }
    Ok(records)
}

pub(crate) fn render_records<T: Serialize>(header: &str, records: &[T]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(header);
    out.push('\n');
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    index: u64,
    speaker: Speaker,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp_ms: Option<u64>,
}

/// Parses transcript text. Indices must increase strictly; utterances are
/// re-indexed from zero in file order.
pub fn parse_transcript(id: &str, text: &str) -> Result<Dialogue> {
    let records: Vec<(usize, UtteranceRecord)> = parse_records(text, FORMAT_HEADER)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("transcript has no utterances".into()));
    }
    let mut utterances = Vec::with_capacity(records.len());
    let mut last: Option<u64> = None;
    for (pos, (line, rec)) in records.into_iter().enumerate() {
        if rec.text.trim().is_empty() {
            return Err(Error::validation(line, "utterance text is blank"));
        }
        if let Some(prev) = last {
            if rec.index <= prev {
                return Err(Error::validation(
                    line,
                    format!("index {} does not exceed previous index {prev}", rec.index),
                ));
            }
        }
        last = Some(rec.index);
        let index = pos as u64;
        utterances.push(Utterance {
            index,
            speaker: rec.speaker,
            text: rec.text,
            timestamp_ms: rec.timestamp_ms.unwrap_or(index * 1000),
        });
    }
    Ok(Dialogue {
        id: id.to_string(),
        utterances,
    })
}

pub fn transcript_to_string(dialogue: &Dialogue) -> String {
    let records: Vec<UtteranceRecord> = dialogue
        .utterances
        .iter()
        .map(|u| UtteranceRecord {
            index: u.index,
            speaker: u.speaker,
            text: u.text.clone(),
            timestamp_ms: Some(u.timestamp_ms),
        })
        .collect();
    render_records(FORMAT_HEADER, &records)
}

/// Loads a transcript; the dialogue id is the file stem.
pub fn load_transcript(path: &Path) -> Result<Dialogue> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dialogue");
    parse_transcript(id, &read_file(path)?)
}

pub fn save_transcript(path: &Path, dialogue: &Dialogue) -> Result<()> {
    write_file(path, &transcript_to_string(dialogue))
}

pub fn parse_kb(text: &str) -> Result<Vec<KbEntry>> {
    let records: Vec<(usize, KbEntry)> = parse_records(text, FORMAT_HEADER)?;
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(records.len());
    for (line, entry) in records {
        if entry.canonical.trim().is_empty() {
            return Err(Error::validation(
                line,
                format!("entry `{}` has an empty canonical name", entry.id),
            ));
        }
        if entry.etype == EntityType::Date {
            return Err(Error::DateInKb(entry.id));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(Error::DuplicateId(entry.id));
        }
        entries.push(entry);
    }
    warn_close_names(&entries);
    Ok(entries)
}

fn warn_close_names(entries: &[KbEntry]) {
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            if a.etype == b.etype {
                let d = edit_distance(&a.canonical.to_lowercase(), &b.canonical.to_lowercase());
                if d < 3 {
                    log::warn!(
                        "knowledge-base entries `{}` and `{}` are only {d} edits apart",
                        a.id,
                        b.id
                    );
                }
            }
        }
    }
}

pub fn load_kb(path: &Path) -> Result<Vec<KbEntry>> {
    parse_kb(&read_file(path)?)
}

pub fn save_kb(path: &Path, kb: &[KbEntry]) -> Result<()> {
    write_file(path, &render_records(FORMAT_HEADER, kb))
}

pub fn load_schema(path: &Path) -> Result<ReportSchema> {
    let records: Vec<(usize, TopicSpec)> = parse_records(&read_file(path)?, FORMAT_HEADER)?;
    ReportSchema::new(records.into_iter().map(|(_, t)| t).collect())
}

pub fn save_schema(path: &Path, schema: &ReportSchema) -> Result<()> {
    write_file(path, &render_records(FORMAT_HEADER, &schema.topics))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Annotation {
    Span(GoldSpan),
    Topic {
        utterance_index: u64,
        topic_id: String,
    },
    Question {
        utterance_index: u64,
        value: bool,
    },
    Negation {
        utterance_index: u64,
        value: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct ReportRecord {
    field_id: String,
    values: Vec<String>,
}

pub fn save_gold_case(dir: &Path, case: &GoldCase) -> Result<()> {
    save_transcript(&dir.join(TRANSCRIPT_FILE), &case.dialogue)?;
    let mut annotations: Vec<Annotation> = case
        .gold_spans
        .iter()
        .cloned()
        .map(Annotation::Span)
        .collect();
    annotations.extend(case.gold_topics.iter().map(|(i, t)| Annotation::Topic {
        utterance_index: *i,
        topic_id: t.clone(),
    }));
    annotations.extend(
        case.gold_questions
            .iter()
            .map(|(i, v)| Annotation::Question {
                utterance_index: *i,
                value: *v,
            }),
    );
    annotations.extend(
        case.gold_negations
            .iter()
            .map(|(i, v)| Annotation::Negation {
                utterance_index: *i,
                value: *v,
            }),
    );
    write_file(
        &dir.join(ANNOTATIONS_FILE),
        &render_records(FORMAT_HEADER, &annotations),
    )?;
    let report: Vec<ReportRecord> = case
        .gold_report
        .iter()
        .map(|(f, v)| ReportRecord {
            field_id: f.clone(),
            values: v.clone(),
        })
        .collect();
    write_file(
        &dir.join(REPORT_FILE),
        &render_records(FORMAT_HEADER, &report),
    )
}

/// Loads one case directory; the dialogue id is the directory name.
pub fn load_gold_case(dir: &Path) -> Result<GoldCase> {
    let id = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    let dialogue = parse_transcript(&id, &read_file(&dir.join(TRANSCRIPT_FILE))?)?;
    let mut case = GoldCase {
        dialogue,
        gold_spans: Vec::new(),
        gold_topics: BTreeMap::new(),
        gold_questions: BTreeMap::new(),
        gold_negations: BTreeMap::new(),
        gold_report: BTreeMap::new(),
    };
    let annotations_text = read_file(&dir.join(ANNOTATIONS_FILE))?;
    // An annotation file may legitimately hold only the header.
    if annotations_text
        .lines()
        .skip(1)
        .any(|l| !l.trim().is_empty())
    {
        for (_, ann) in parse_records::<Annotation>(&annotations_text, FORMAT_HEADER)? {
            match ann {
                Annotation::Span(s) => case.gold_spans.push(s),
                Annotation::Topic {
                    utterance_index,
                    topic_id,
                } => {
                    case.gold_topics.insert(utterance_index, topic_id);
                }
                Annotation::Question {
                    utterance_index,
                    value,
                } => {
                    case.gold_questions.insert(utterance_index, value);
                }
                Annotation::Negation {
                    utterance_index,
                    value,
                } => {
                    case.gold_negations.insert(utterance_index, value);
                }
            }
        }
    }
    let report_text = read_file(&dir.join(REPORT_FILE))?;
    if report_text.lines().skip(1).any(|l| !l.trim().is_empty()) {
        for (_, rec) in parse_records::<ReportRecord>(&report_text, FORMAT_HEADER)? {
            case.gold_report.insert(rec.field_id, rec.values);
        }
    }
    case.validate()?;
    Ok(case)
}

/// Writes one sub-directory per case, named by dialogue id.
pub fn save_corpus(dir: &Path, cases: &[GoldCase]) -> Result<()> {
    for case in cases {
        save_gold_case(&dir.join(&case.dialogue.id), case)?;
    }
    Ok(())
}

/// Loads every case directory under `dir`, in name order.
pub fn load_corpus(dir: &Path) -> Result<Vec<GoldCase>> {
    let mut dirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(TRANSCRIPT_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no case directories under {}",
            dir.display()
        )));
    }
    dirs.iter().map(|d| load_gold_case(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transcript(lines: &[&str]) -> String {
        let mut s = format!("{FORMAT_HEADER}\n");
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    #[test]
    fn two_lines_load_with_indices() {
        let text = transcript(&[
            r#"{"index":0,"speaker":"Assessor","text":"where do you live now","timestamp_ms":0}"#,
            r#"{"index":1,"speaker":"Claimant","text":"Jinan Road.","timestamp_ms":900}"#,
        ]);
        let d = parse_transcript("t", &text).unwrap();
        assert_eq!(d.utterances.len(), 2);
        assert_eq!(d.utterances[0].index, 0);
        assert_eq!(d.utterances[1].index, 1);
        assert_eq!(d.utterances[1].speaker, Speaker::Claimant);
        assert_eq!(d.utterances[1].timestamp_ms, 900);
    }

    #[test]
    fn missing_timestamp_defaults_to_index_seconds() {
        let text = transcript(&[
            r#"{"index":3,"speaker":"Assessor","text":"hello"}"#,
            r#"{"index":7,"speaker":"Claimant","text":"hi"}"#,
        ]);
        let d = parse_transcript("t", &text).unwrap();
        assert_eq!(d.utterances[1].index, 1);
        assert_eq!(d.utterances[1].timestamp_ms, 1000);
    }

    #[test]
    fn blank_text_names_the_line() {
        // The header occupies physical line 1, so the first record is line 2.
        let text = transcript(&[r#"{"index":0,"speaker":"Assessor","text":"   "}"#]);
        match parse_transcript("t", &text) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = transcript(&[
            r#"{"index":0,"speaker":"Assessor","text":"a"}"#,
            r#"{"index":1,"speaker":"Nobody","text":"b"}"#,
        ]);
        match parse_transcript("t", &text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_header_only_files_are_empty_input() {
        assert!(matches!(
            parse_transcript("t", ""),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_transcript("t", &transcript(&[])),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn non_monotone_indices_are_rejected() {
        let text = transcript(&[
            r#"{"index":2,"speaker":"Assessor","text":"a"}"#,
            r#"{"index":2,"speaker":"Claimant","text":"b"}"#,
        ]);
        assert!(matches!(
            parse_transcript("t", &text),
            Err(Error::Validation { line: 3, .. })
        ));
    }

    #[test]
    fn missing_header_is_a_parse_error() {
        let text = r#"{"index":0,"speaker":"Assessor","text":"a"}"#;
        assert!(matches!(
            parse_transcript("t", text),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn kb_text(lines: &[&str]) -> String {
        transcript(lines)
    }

    #[test]
    fn kb_loads_distinct_entries() {
        let text = kb_text(&[
            r#"{"id":"hos-1","etype":"Hos","canonical":"Qilu Hospital","aliases":["Qilu Hosp"]}"#,
            r#"{"id":"dis-1","etype":"Dis","canonical":"lung cancer","aliases":[]}"#,
            r#"{"id":"addr-1","etype":"Addr","canonical":"Jinan Road"}"#,
        ]);
        assert_eq!(parse_kb(&text).unwrap().len(), 3);
    }

    #[test]
    fn kb_rejects_date_entries() {
        let text = kb_text(&[r#"{"id":"d-1","etype":"Date","canonical":"2019-03-01"}"#]);
        assert!(matches!(parse_kb(&text), Err(Error::DateInKb(id)) if id == "d-1"));
    }

    #[test]
    fn kb_rejects_duplicate_ids() {
        let text = kb_text(&[
            r#"{"id":"x","etype":"Hos","canonical":"Qilu Hospital"}"#,
            r#"{"id":"x","etype":"Dis","canonical":"diabetes"}"#,
        ]);
        assert!(matches!(parse_kb(&text), Err(Error::DuplicateId(id)) if id == "x"));
    }
}
