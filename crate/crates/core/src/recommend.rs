//! Keyword display feed, report-field suggestions, and the knowledge-base
//! retrieval baseline they are compared against.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityType, FieldRef, ReportSchema};
use crate::error::{Error, Result};
use crate::linking::{normalize, KbIndex};
use crate::tracker::{KeywordRecord, KeywordState, SessionState};

pub const MAX_SUGGESTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    Pipeline,
    RetrievalBaseline,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionList {
    pub field_id: String,
    pub candidates: Vec<String>,
    pub source: SuggestionSource,
}

/// Confirmed records, most recent mention first; ties by newer record.
fn confirmed_recent_first(state: &SessionState) -> Vec<&KeywordRecord> {
    let mut records: Vec<&KeywordRecord> = state
        .ledger
        .iter()
        .filter(|r| r.state == KeywordState::Confirmed)
        .collect();
    records.sort_by(|a, b| {
        b.utterance_index
            .cmp(&a.utterance_index)
            .then(b.id.cmp(&a.id))
    });
    records
}

/// Confirmed values per entity type, most recent first, without repeats.
/// All five types are present.
pub fn display_feed(state: &SessionState) -> BTreeMap<EntityType, Vec<String>> {
    let mut feed: BTreeMap<EntityType, Vec<String>> =
        EntityType::ALL.iter().map(|&t| (t, Vec::new())).collect();
    for r in confirmed_recent_first(state) {
        let list = feed.entry(r.etype).or_default();
        if !list.contains(&r.value) {
            list.push(r.value.clone());
        }
    }
    feed
}

/// Confirmed values of the field's topic and type first, then values of the
/// same type from other topics; each group most recent first, at most five.
pub fn suggest(state: &SessionState, field: &FieldRef) -> SuggestionList {
    let records = confirmed_recent_first(state);
    let mut candidates: Vec<String> = Vec::new();
    let topical = records
        .iter()
        .filter(|r| r.etype == field.etype && r.topic.as_deref() == Some(field.topic_id.as_str()));
    let fallback = records
        .iter()
        .filter(|r| r.etype == field.etype && r.topic.as_deref() != Some(field.topic_id.as_str()));
    for r in topical.chain(fallback) {
        if candidates.len() == MAX_SUGGESTIONS {
            break;
        }
        if !candidates.contains(&r.value) {
            candidates.push(r.value.clone());
        }
    }
    SuggestionList {
        field_id: field.field_id.clone(),
        candidates,
        source: SuggestionSource::Pipeline,
    }
}

pub fn suggest_for_field(
    state: &SessionState,
    schema: &ReportSchema,
    field_id: &str,
) -> Result<SuggestionList> {
    let field = schema
        .field(field_id)
        .ok_or_else(|| Error::UnknownField(field_id.to_string()))?;
    Ok(suggest(state, &field))
}

fn trigram_set(s: &str) -> HashSet<Vec<char>> {
    let chars: Vec<char> = normalize(s).chars().collect();
    chars.windows(3).map(|w| w.to_vec()).collect()
}

/// Number of distinct trigrams of `name` that also occur in `text_grams`.
pub fn trigram_overlap(name: &str, text_grams: &HashSet<Vec<char>>) -> usize {
    trigram_set(name)
        .iter()
        .filter(|g| text_grams.contains(*g))
        .count()
}

/// Top five knowledge-base entries of the field's type by trigram overlap
/// with the dialogue text, taking the best-matching name of each entry;
/// ties go to the smaller entry id.
pub fn retrieval_baseline(
    kb: &KbIndex,
    dialogue_text: &str,
    field: &FieldRef,
) -> Result<SuggestionList> {
    if field.etype == EntityType::Date {
        return Err(Error::UnsupportedField(field.field_id.clone()));
    }
    let grams = trigram_set(dialogue_text);
    let mut scored: Vec<(usize, &str, &str)> = kb
        .entries_of(field.etype)
        .map(|e| {
            let best = e
                .names()
                .map(|n| trigram_overlap(n, &grams))
                .max()
                .unwrap_or(0);
            (best, e.id.as_str(), e.canonical.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    Ok(SuggestionList {
        field_id: field.field_id.clone(),
        candidates: scored
            .into_iter()
            .take(MAX_SUGGESTIONS)
            .map(|(_, _, c)| c.to_string())
            .collect(),
        source: SuggestionSource::RetrievalBaseline,
    })
}

pub fn retrieval_baseline_suggest(
    kb: &KbIndex,
    dialogue_text: &str,
    schema: &ReportSchema,
    field_id: &str,
) -> Result<SuggestionList> {
    let field = schema
        .field(field_id)
        .ok_or_else(|| Error::UnknownField(field_id.to_string()))?;
    retrieval_baseline(kb, dialogue_text, &field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::KbEntry;
    use crate::linking::{LinkMethod, LinkResult};

    fn rec(
        id: u64,
        value: &str,
        etype: EntityType,
        topic: &str,
        idx: u64,
        state: KeywordState,
    ) -> KeywordRecord {
        KeywordRecord {
            id,
            value: value.into(),
            etype,
            topic: Some(topic.into()),
            utterance_index: idx,
            state,
            link: LinkResult {
                entry_id: None,
                normalized_value: value.into(),
                score: 1.0,
                method: LinkMethod::Exact,
            },
        }
    }

    fn state(records: Vec<KeywordRecord>) -> SessionState {
        SessionState {
            ledger: records,
            ..SessionState::default()
        }
    }

    fn field(topic: &str, etype: EntityType) -> FieldRef {
        FieldRef {
            field_id: "f".into(),
            topic_id: topic.into(),
            etype,
        }
    }

    #[test]
    fn feed_is_recent_first_and_confirmed_only() {
        use EntityType::*;
        let s = state(vec![
            rec(1, "A Hospital", Hos, "t", 4, KeywordState::Confirmed),
            rec(2, "B Hospital", Hos, "t", 10, KeywordState::Confirmed),
            rec(3, "C Hospital", Hos, "t", 12, KeywordState::Dropped),
            rec(4, "D Hospital", Hos, "t", 13, KeywordState::Tentative),
        ]);
        let feed = display_feed(&s);
        assert_eq!(feed.len(), 5);
        assert_eq!(feed[&Hos], vec!["B Hospital", "A Hospital"]);
        assert!(display_feed(&SessionState::new())
            .values()
            .all(Vec::is_empty));
    }

    #[test]
    fn caps_at_five_most_recent() {
        let s = state(
            (1..=7)
                .map(|i| {
                    rec(
                        i,
                        &format!("H{i}"),
                        EntityType::Hos,
                        "t",
                        i * 2,
                        KeywordState::Confirmed,
                    )
                })
                .collect(),
        );
        let l = suggest(&s, &field("t", EntityType::Hos));
        assert_eq!(l.candidates, vec!["H7", "H6", "H5", "H4", "H3"]);
    }

    #[test]
    fn falls_back_to_type_only_matches() {
        let s = state(vec![
            rec(
                1,
                "H1",
                EntityType::Hos,
                "other",
                3,
                KeywordState::Confirmed,
            ),
            rec(2, "H2", EntityType::Hos, "else", 5, KeywordState::Confirmed),
            rec(3, "D1", EntityType::Dis, "t", 6, KeywordState::Confirmed),
        ]);
        assert_eq!(
            suggest(&s, &field("t", EntityType::Hos)).candidates,
            vec!["H2", "H1"]
        );
        let s = state(vec![
            rec(
                1,
                "H1",
                EntityType::Hos,
                "other",
                9,
                KeywordState::Confirmed,
            ),
            rec(2, "H2", EntityType::Hos, "t", 5, KeywordState::Confirmed),
        ]);
        assert_eq!(
            suggest(&s, &field("t", EntityType::Hos)).candidates,
            vec!["H2", "H1"]
        );
        assert!(suggest(&SessionState::new(), &field("t", EntityType::Date))
            .candidates
            .is_empty());
    }

    #[test]
    fn baseline_ranks_verbatim_mention_first_and_rejects_dates() {
        let kb: Vec<KbEntry> = ["Qilu Hospital", "Renji Hospital", "Huashan Hospital"]
            .iter()
            .enumerate()
            .map(|(i, n)| KbEntry {
                id: format!("hos-{:03}", i + 1),
                etype: EntityType::Hos,
                canonical: n.to_string(),
                aliases: vec![],
            })
            .collect();
        let idx = KbIndex::build(&kb);
        let l = retrieval_baseline(
            &idx,
            "did you visit huashan hospital",
            &field("t", EntityType::Hos),
        )
        .unwrap();
        assert_eq!(l.candidates[0], "Huashan Hospital");
        let l = retrieval_baseline(&idx, "", &field("t", EntityType::Hos)).unwrap();
        assert_eq!(
            l.candidates,
            vec!["Qilu Hospital", "Renji Hospital", "Huashan Hospital"]
        );
        assert!(matches!(
            retrieval_baseline(&idx, "x", &field("t", EntityType::Date)),
            Err(Error::UnsupportedField(_))
        ));
    }
}
