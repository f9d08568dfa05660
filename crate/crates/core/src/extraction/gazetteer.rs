use std::collections::HashMap;

use super::{tokenize, BioLabel, TokenSequence};
use crate::corpus::dates::{normalize_numeric, weekday};
use crate::corpus::{EntityType, KbEntry};

/// Number of tokens a date starting at `i` covers under the date grammar,
/// or 0: a numeric date token, or `last <weekday>`.
pub fn date_length_at(toks: &TokenSequence, i: usize) -> usize {
    let Some(tok) = toks.tokens.get(i) else {
        return 0;
    };
    if normalize_numeric(&tok.surface).is_some() {
        return 1;
    }
    if tok.surface.eq_ignore_ascii_case("last")
        && toks
            .tokens
            .get(i + 1)
            .is_some_and(|t| weekday(&t.surface).is_some())
    {
        return 2;
    }
    0
}

/// Alias matcher built from the knowledge base.
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    /// First lowercased token → candidate aliases, longest first.
    by_first: HashMap<String, Vec<(Vec<String>, EntityType)>>,
    /// Lowercased token → bit `2 * etype` when it starts an alias of that
    /// type, bit `2 * etype + 1` when it occurs later in one.
    flags: HashMap<String, u16>,
}

impl Gazetteer {
    pub fn from_kb(kb: &[KbEntry]) -> Self {
        let mut g = Gazetteer::default();
        for entry in kb {
            for name in entry.names() {
                let toks: Vec<String> = tokenize(name)
                    .tokens
                    .into_iter()
                    .map(|t| t.surface.to_lowercase())
                    .collect();
                if toks.is_empty() {
                    continue;
                }
                let bit = 2 * entry.etype.index();
                for (k, t) in toks.iter().enumerate() {
                    *g.flags.entry(t.clone()).or_default() |= 1 << (bit + usize::from(k > 0));
                }
                let list = g.by_first.entry(toks[0].clone()).or_default();
                if !list.iter().any(|(a, t)| a == &toks && *t == entry.etype) {
                    list.push((toks, entry.etype));
                }
            }
        }
        for list in g.by_first.values_mut() {
            list.sort_by(|a, b| {
                b.0.len()
                    .cmp(&a.0.len())
                    .then(a.1.cmp(&b.1))
                    .then(a.0.cmp(&b.0))
            });
        }
        g
    }

    pub fn token_flags(&self, token: &str) -> u16 {
        self.flags.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    /// Longest alias match starting at token `i`, as (length, type).
    fn alias_at(&self, lower: &[String], i: usize) -> Option<(usize, EntityType)> {
        self.by_first.get(&lower[i])?.iter().find_map(|(alias, t)| {
            let end = i + alias.len();
            (end <= lower.len() && lower[i..end] == alias[..]).then_some((alias.len(), *t))
        })
    }

    /// Leftmost-longest tagging with aliases and the date grammar.
    pub fn tag(&self, toks: &TokenSequence) -> Vec<BioLabel> {
        let lower: Vec<String> = toks
            .tokens
            .iter()
            .map(|t| t.surface.to_lowercase())
            .collect();
        let mut labels = vec![BioLabel::O; lower.len()];
        let mut i = 0;
        while i < lower.len() {
            let alias = self.alias_at(&lower, i);
            let date = date_length_at(toks, i);
            let best = match alias {
                Some((len, t)) if len >= date => Some((len, t)),
                _ if date > 0 => Some((date, EntityType::Date)),
                _ => None,
            };
            match best {
                Some((len, t)) => {
                    labels[i] = BioLabel::B(t);
                    for l in &mut labels[i + 1..i + len] {
                        *l = BioLabel::I(t);
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        labels
    }
}
