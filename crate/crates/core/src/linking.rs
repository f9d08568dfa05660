//! Entity linking of tagged spans to the knowledge base, tolerant to
//! transcription noise. Dates pass through in normalized form.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::dates::normalize_date;
use crate::corpus::{edit_distance, EntityType, KbEntry};
use crate::extraction::TaggedSpan;

pub const DEFAULT_TAU: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMethod {
    Exact,
    Fuzzy,
    Passthrough,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub entry_id: Option<String>,
    pub normalized_value: String,
    pub score: f64,
    pub method: LinkMethod,
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn trigrams(s: &str) -> Vec<String> {
    let padded: Vec<char> = "\u{2}\u{2}"
        .chars()
        .chain(s.chars())
        .chain("\u{3}\u{3}".chars())
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

#[derive(Clone, Debug, Default)]
struct TypeIndex {
    /// Normalized alias → entry id.
    aliases: BTreeMap<String, String>,
    /// Alias list addressed by the trigram postings.
    alias_list: Vec<(String, String)>,
    postings: HashMap<String, Vec<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct KbIndex {
    types: BTreeMap<EntityType, TypeIndex>,
    entries: BTreeMap<String, KbEntry>,
    pub warnings: Vec<String>,
}

impl KbIndex {
    pub fn build(kb: &[KbEntry]) -> Self {
        let mut idx = KbIndex::default();
        let mut sorted: Vec<&KbEntry> = kb.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for entry in sorted {
            idx.entries.insert(entry.id.clone(), entry.clone());
            let table = idx.types.entry(entry.etype).or_default();
            for name in entry.names() {
                let key = normalize(name);
                match table.aliases.get(&key) {
                    Some(owner) if owner != &entry.id => {
                        let msg = format!(
                            "alias `{key}` is shared by `{owner}` and `{}`; keeping `{owner}`",
                            entry.id
                        );
                        log::warn!("{msg}");
                        idx.warnings.push(msg);
                    }
                    Some(_) => {}
                    None => {
                        table.aliases.insert(key, entry.id.clone());
                    }
                }
            }
        }
        for table in idx.types.values_mut() {
            table.alias_list = table
                .aliases
                .iter()
                .map(|(a, id)| (a.clone(), id.clone()))
                .collect();
            for (k, (alias, _)) in table.alias_list.iter().enumerate() {
                for g in trigrams(alias) {
                    let list = table.postings.entry(g).or_default();
                    if list.last() != Some(&k) {
                        list.push(k);
                    }
                }
            }
        }
        idx
    }

    /// Number of alias-table rows across all types.
    pub fn alias_rows(&self) -> usize {
        self.types.values().map(|t| t.aliases.len()).sum()
    }

    pub fn entry(&self, id: &str) -> Option<&KbEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &KbEntry> {
        self.entries.values()
    }

    pub fn entries_of(&self, etype: EntityType) -> impl Iterator<Item = &KbEntry> {
        self.entries.values().filter(move |e| e.etype == etype)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Links a raw surface of the given type.
    pub fn link(&self, etype: EntityType, surface: &str, tau: f64) -> LinkResult {
        if etype == EntityType::Date {
            let value = normalize_date(surface).unwrap_or_else(|| surface.trim().to_string());
            return LinkResult {
                entry_id: None,
                normalized_value: value,
                score: 1.0,
                method: LinkMethod::Passthrough,
            };
        }
        let key = normalize(surface);
        let rejected = |score: f64| LinkResult {
            entry_id: None,
            normalized_value: key.clone(),
            score,
            method: LinkMethod::Rejected,
        };
        let Some(table) = self.types.get(&etype) else {
            return rejected(0.0);
        };
        if let Some(id) = table.aliases.get(&key) {
            return LinkResult {
                entry_id: Some(id.clone()),
                normalized_value: self.entries[id].canonical.clone(),
                score: 1.0,
                method: LinkMethod::Exact,
            };
        }
        let mut candidates: Vec<usize> = trigrams(&key)
            .iter()
            .filter_map(|g| table.postings.get(g))
            .flatten()
            .copied()
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let key_len = key.chars().count();
        let mut best: Option<(f64, &str)> = None;
        for k in candidates {
            let (alias, id) = &table.alias_list[k];
            let longest = key_len.max(alias.chars().count()).max(1);
            let score = 1.0 - edit_distance(&key, alias) as f64 / longest as f64;
            let better = match best {
                None => true,
                Some((s, bid)) => score > s || (score == s && id.as_str() < bid),
            };
            if better {
                best = Some((score, id));
            }
        }
        match best {
            Some((score, id)) if score >= tau => LinkResult {
                entry_id: Some(id.to_string()),
                normalized_value: self.entries[id].canonical.clone(),
                score,
                method: LinkMethod::Fuzzy,
            },
            Some((score, _)) => rejected(score.max(0.0)),
            None => rejected(0.0),
        }
    }
}

pub fn build_index(kb: &[KbEntry]) -> KbIndex {
    KbIndex::build(kb)
}

pub fn link_span(span: &TaggedSpan, idx: &KbIndex, tau: f64) -> LinkResult {
    idx.link(span.etype, &span.surface, tau)
}
