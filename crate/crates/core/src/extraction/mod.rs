//! Tokenization, BIO tagging over the five entity types, and span decoding.

mod gazetteer;
mod tagger;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityType, GoldSpan, Utterance};
use crate::error::{Error, Result};

pub use gazetteer::{date_length_at, Gazetteer};
pub use tagger::{train_tagger, LinearTagger, TaggerModel, FEATURE_BUCKETS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub utterance_index: u64,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF)
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

/// Splits on whitespace and punctuation, keeping punctuation as tokens.
/// `-`, `/`, `.` and `'` stay inside a word when flanked by word characters,
/// so dates like `2019-03-01` and names like `Yan'an` are single tokens.
/// Characters from scripts written without spaces become one token each.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |k: usize| chars.get(k).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (start, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        let mut next = k + 1;
        if is_word(c) {
            while next < chars.len() {
                let n = chars[next].1;
                if is_word(n) {
                    next += 1;
                } else if matches!(n, '-' | '/' | '.' | '\'')
                    && chars.get(next + 1).is_some_and(|&(_, a)| is_word(a))
                {
                    next += 2;
                } else {
                    break;
                }
            }
        }
        let end = end_of(next);
        tokens.push(Token {
            surface: text[start..end].to_string(),
            char_start: start,
            char_end: end,
        });
        k = next;
    }
    TokenSequence {
        utterance_index: 0,
        text: text.to_string(),
        tokens,
    }
}

pub fn tokenize_utterance(utt: &Utterance) -> TokenSequence {
    TokenSequence {
        utterance_index: utt.index,
        ..tokenize(&utt.text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BioLabel {
    O,
    B(EntityType),
    I(EntityType),
}

impl BioLabel {
    pub const COUNT: usize = 11;

    pub fn all() -> [BioLabel; 11] {
        let mut out = [BioLabel::O; 11];
        for t in EntityType::ALL {
            out[1 + 2 * t.index()] = BioLabel::B(t);
            out[2 + 2 * t.index()] = BioLabel::I(t);
        }
        out
    }

    pub fn index(self) -> usize {
        match self {
            BioLabel::O => 0,
            BioLabel::B(t) => 1 + 2 * t.index(),
            BioLabel::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<BioLabel> {
        Self::all().get(i).copied()
    }

    pub fn etype(self) -> Option<EntityType> {
        match self {
            BioLabel::O => None,
            BioLabel::B(t) | BioLabel::I(t) => Some(t),
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::O => f.write_str("O"),
            BioLabel::B(t) => write!(f, "B-{t}"),
            BioLabel::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for BioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(BioLabel::O);
        }
        match s.split_once('-') {
            Some(("B", t)) => Ok(BioLabel::B(t.parse()?)),
            Some(("I", t)) => Ok(BioLabel::I(t.parse()?)),
            _ => Err(Error::Invalid(format!("unknown BIO label `{s}`"))),
        }
    }
}

/// A decoded entity mention. Offsets are byte offsets into the utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedSpan {
    pub etype: EntityType,
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
    pub utterance_index: u64,
    pub confidence: f64,
}

/// Projects annotated spans onto tokens: the first overlapping token gets
/// `B-x`, later overlapping tokens `I-x`.
pub fn spans_to_labels(toks: &TokenSequence, spans: &[GoldSpan]) -> Vec<BioLabel> {
    let mut labels = vec![BioLabel::O; toks.len()];
    for span in spans
        .iter()
        .filter(|s| s.utterance_index == toks.utterance_index)
    {
        let mut first = true;
        for (label, tok) in labels.iter_mut().zip(&toks.tokens) {
            if tok.char_start < span.char_end && tok.char_end > span.char_start {
                *label = if first {
                    BioLabel::B(span.etype)
                } else {
                    BioLabel::I(span.etype)
                };
                first = false;
            }
        }
    }
    labels
}

pub fn decode_spans(toks: &TokenSequence, labels: &[BioLabel]) -> Vec<TaggedSpan> {
    decode_spans_scored(toks, labels, &vec![1.0; labels.len()])
}

/// Groups maximal `B-x I-x*` runs into spans. An `I-x` that does not
/// continue a span of type `x` opens a new one. Confidence is the score of
/// the span's first token.
pub fn decode_spans_scored(
    toks: &TokenSequence,
    labels: &[BioLabel],
    scores: &[f64],
) -> Vec<TaggedSpan> {
    assert_eq!(labels.len(), toks.len(), "one label per token");
    let mut spans: Vec<TaggedSpan> = Vec::new();
    let mut open: Option<EntityType> = None;
    for (i, (label, tok)) in labels.iter().zip(&toks.tokens).enumerate() {
        match *label {
            BioLabel::O => open = None,
            BioLabel::I(t) if open == Some(t) => {
                let span = spans.last_mut().expect("open span exists");
                span.char_end = tok.char_end;
                span.surface = toks.text[span.char_start..span.char_end].to_string();
            }
            BioLabel::B(t) | BioLabel::I(t) => {
                spans.push(TaggedSpan {
                    etype: t,
                    surface: tok.surface.clone(),
                    char_start: tok.char_start,
                    char_end: tok.char_end,
                    utterance_index: toks.utterance_index,
                    confidence: scores.get(i).copied().unwrap_or(1.0).clamp(0.0, 1.0),
                });
                open = Some(t);
            }
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GoldLink;
    use EntityType::*;

    fn surfaces(text: &str) -> Vec<String> {
        tokenize(text)
            .tokens
            .into_iter()
            .map(|t| t.surface)
            .collect()
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(
            surfaces("visited Qilu Hospital."),
            ["visited", "Qilu", "Hospital", "."]
        );
        assert_eq!(
            surfaces("from 2019-03-01 onward"),
            ["from", "2019-03-01", "onward"]
        );
        assert_eq!(
            surfaces("Yan'an Rd, 2019/3/5!"),
            ["Yan'an", "Rd", ",", "2019/3/5", "!"]
        );
        assert_eq!(surfaces("  "), Vec::<String>::new());
    }

    #[test]
    fn cjk_falls_back_to_characters() {
        assert_eq!(surfaces("齐鲁医院 ok"), ["齐", "鲁", "医", "院", "ok"]);
    }

    #[test]
    fn label_indices_cover_eleven_values() {
        let all = BioLabel::all();
        assert_eq!(all.len(), BioLabel::COUNT);
        for (i, l) in all.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.to_string().parse::<BioLabel>().unwrap(), *l);
        }
    }

    #[test]
    fn projection_of_a_two_token_hospital() {
        let toks = tokenize("visited Qilu Hospital.");
        let span = GoldSpan {
            utterance_index: 0,
            char_start: 8,
            char_end: 21,
            etype: Hos,
            surface: "Qilu Hospital".into(),
            link: GoldLink::Kb {
                id: "hos-001".into(),
            },
        };
        assert_eq!(
            spans_to_labels(&toks, &[span]),
            [BioLabel::O, BioLabel::B(Hos), BioLabel::I(Hos), BioLabel::O]
        );
    }

    #[test]
    fn decoding_and_repair() {
        let toks = tokenize("a b c");
        let spans = decode_spans(&toks, &[BioLabel::B(Hos), BioLabel::I(Hos), BioLabel::O]);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "a b");

        let one = tokenize("x");
        let spans = decode_spans(&one, &[BioLabel::I(Dis)]);
        assert_eq!((spans.len(), spans[0].etype), (1, Dis));

        let two = tokenize("x y");
        let spans = decode_spans(&two, &[BioLabel::B(Addr), BioLabel::I(Date)]);
        let kinds: Vec<_> = spans.iter().map(|s| s.etype).collect();
        assert_eq!(kinds, [Addr, Date]);
    }

    /// Reference decoder written independently: walk labels, treat any label
    /// whose type differs from the previous label's type, or any B, as a
    /// start.
    fn reference(labels: &[BioLabel]) -> Vec<(usize, usize, EntityType)> {
        let mut out: Vec<(usize, usize, EntityType)> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let Some(t) = l.etype() else { continue };
            let continues = matches!(l, BioLabel::I(_))
                && i > 0
                && labels[i - 1].etype() == Some(t)
                && out.last().is_some_and(|s| s.1 == i);
            if continues {
                out.last_mut().unwrap().1 = i + 1;
            } else {
                out.push((i, i + 1, t));
            }
        }
        out
    }

    #[test]
    fn decoder_matches_reference_on_all_short_label_strings() {
        let all = BioLabel::all();
        let toks3 = tokenize("p q r");
        for n in 1..=3usize {
            let toks = TokenSequence {
                tokens: toks3.tokens[..n].to_vec(),
                ..toks3.clone()
            };
            for code in 0..all.len().pow(n as u32) {
                let labels: Vec<BioLabel> = (0..n)
                    .map(|k| all[(code / all.len().pow(k as u32)) % all.len()])
                    .collect();
                let got: Vec<_> = decode_spans(&toks, &labels)
                    .iter()
                    .map(|s| {
                        let first = toks
                            .tokens
                            .iter()
                            .position(|t| t.char_start == s.char_start)
                            .unwrap();
                        let last = toks
                            .tokens
                            .iter()
                            .position(|t| t.char_end == s.char_end)
                            .unwrap();
                        (first, last + 1, s.etype)
                    })
                    .collect();
                assert_eq!(got, reference(&labels), "labels {labels:?}");
            }
        }
    }
}
