//! Seeded synthetic assessment dialogues with gold annotations.
//!
//! Every dialogue visits the schema topics in order. Questions naming
//! entities are answered positively or, with probability `negation_rate`,
//! negatively; a negated question contributes nothing to the gold report.
//! Entities mentioned only by the assessor and never confirmed are omitted
//! from the report.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dates::{normalize_date, WEEKDAYS};
use super::templates::{self, QuestionTemplate, TopicTemplates};
use super::{
    corrupt_text, Dialogue, EntityType, GoldCase, GoldLink, GoldSpan, KbEntry, NoiseConfig,
    ReportSchema, Speaker, Utterance,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub n_dialogues: usize,
    pub negation_rate: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Target number of entity mentions per dialogue, spread over topics.
    pub keywords_per_dialogue: usize,
    /// Probability of using an alias instead of the canonical name.
    pub alias_rate: f64,
    /// Probability of an assessor acknowledgement after a round.
    pub ack_rate: f64,
}

impl GeneratorConfig {
    pub fn new(n_dialogues: usize, negation_rate: f64, noise: NoiseConfig, seed: u64) -> Self {
        GeneratorConfig {
            n_dialogues,
            negation_rate,
            noise,
            seed,
            keywords_per_dialogue: 25,
            alias_rate: 0.3,
            ack_rate: 0.25,
        }
    }
}

/// splitmix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn generate_corpus(
    schema: &ReportSchema,
    kb: &[KbEntry],
    config: &GeneratorConfig,
) -> Result<Vec<GoldCase>> {
    if config.n_dialogues == 0 {
        return Err(Error::Generation("n_dialogues must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.negation_rate) {
        return Err(Error::Generation(format!(
            "negation_rate {} outside [0, 1]",
            config.negation_rate
        )));
    }
    let mut by_type: BTreeMap<EntityType, Vec<&KbEntry>> = BTreeMap::new();
    for entry in kb {
        by_type.entry(entry.etype).or_default().push(entry);
    }
    for field in schema.fields() {
        if field.etype != EntityType::Date && !by_type.contains_key(&field.etype) {
            return Err(Error::Generation(format!(
                "knowledge base has no {} entries, needed by field `{}`",
                field.etype, field.field_id
            )));
        }
    }
    let mut topic_templates = Vec::with_capacity(schema.topics.len());
    for topic in &schema.topics {
        let t = templates::topic(&topic.topic_id).ok_or_else(|| {
            Error::Generation(format!(
                "no dialogue templates for topic `{}`",
                topic.topic_id
            ))
        })?;
        topic_templates.push(t);
    }

    (0..config.n_dialogues)
        .map(|i| {
            let rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ mix_seed(i as u64)));
            let builder = DialogueBuilder {
                id: format!("s{}-d{:04}", config.seed, i),
                rng,
                config,
                schema,
                by_type: &by_type,
                noise_base: mix_seed(config.noise.seed ^ mix_seed(config.seed) ^ (i as u64) << 20),
                utterances: Vec::new(),
                spans: Vec::new(),
                topics: BTreeMap::new(),
                questions: BTreeMap::new(),
                negations: BTreeMap::new(),
                report: BTreeMap::new(),
                used: HashSet::new(),
                clock_ms: 0,
            };
            builder.build(&topic_templates)
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Mention {
    etype: EntityType,
    value: String,
    link: GoldLink,
}

struct Rendered {
    text: String,
    /// Mentions with their byte ranges in `text`; a range is `None` when noise
    /// erased the surface entirely.
    mentions: Vec<(Mention, Option<(usize, usize)>)>,
}

struct DialogueBuilder<'a> {
    id: String,
    rng: ChaCha8Rng,
    config: &'a GeneratorConfig,
    schema: &'a ReportSchema,
    by_type: &'a BTreeMap<EntityType, Vec<&'a KbEntry>>,
    noise_base: u64,
    utterances: Vec<Utterance>,
    spans: Vec<GoldSpan>,
    topics: BTreeMap<u64, String>,
    questions: BTreeMap<u64, bool>,
    negations: BTreeMap<u64, bool>,
    report: BTreeMap<String, Vec<String>>,
    used: HashSet<(EntityType, String)>,
    clock_ms: u64,
}

enum Piece<'t> {
    Text(&'t str),
    Fresh(EntityType),
    Repeat(EntityType),
}

fn parse_template(template: &str) -> Result<Vec<Piece<'_>>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..]
            .find('}')
            .map(|c| c + open)
            .ok_or_else(|| Error::Generation(format!("unclosed slot in `{template}`")))?;
        let slot = &rest[open + 1..close];
        let (repeat, name) = match slot.strip_prefix('=') {
            Some(n) => (true, n),
            None => (false, slot),
        };
        let etype: EntityType = name.parse()?;
        pieces.push(if repeat {
            Piece::Repeat(etype)
        } else {
            Piece::Fresh(etype)
        });
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    Ok(pieces)
}

impl<'a> DialogueBuilder<'a> {
    fn build(mut self, topics: &[&'static TopicTemplates]) -> Result<GoldCase> {
        for (i, (assessor, claimant)) in templates::PREAMBLE.iter().enumerate() {
            let a = self.render(assessor, &[])?;
            let idx = self.push(Speaker::Assessor, a, None);
            self.questions.insert(idx, templates::PREAMBLE_QUESTIONS[i]);
            let c = self.render(claimant, &[])?;
            let idx = self.push(Speaker::Claimant, c, None);
            self.negations.insert(idx, false);
        }

        let per_topic = self
            .config
            .keywords_per_dialogue
            .div_ceil(topics.len())
            .max(1);
        for (spec, tpl) in self.schema.topics.iter().zip(topics) {
            let topic = spec.topic_id.as_str();
            let opener = tpl
                .openers
                .choose(&mut self.rng)
                .expect("topics have openers");
            let mut mentions = self.question_round(topic, opener)?;
            let mut rounds = 0;
            while mentions < per_topic && rounds < 16 {
                rounds += 1;
                let roll: f64 = self.rng.gen();
                mentions += if roll < 0.55 && !tpl.entity_questions.is_empty() {
                    let q = tpl.entity_questions.choose(&mut self.rng).unwrap();
                    self.question_round(topic, q)?
                } else if roll < 0.8 && !tpl.follow_ups.is_empty() {
                    let q = tpl.follow_ups.choose(&mut self.rng).unwrap();
                    self.question_round(topic, q)?
                } else {
                    let s = *tpl.statements.choose(&mut self.rng).unwrap();
                    self.statement_round(topic, s)?
                };
                if self.rng.gen_bool(self.config.ack_rate) {
                    let ack = *templates::ACKS.choose(&mut self.rng).unwrap();
                    let r = self.render(ack, &[])?;
                    let idx = self.push(Speaker::Assessor, r, Some(topic));
                    self.questions.insert(idx, false);
                }
            }
        }

        let last_topic = self.schema.topics.last().map(|t| t.topic_id.clone());
        let (assessor, claimant) = templates::CLOSING;
        let a = self.render(assessor, &[])?;
        let idx = self.push(Speaker::Assessor, a, last_topic.as_deref());
        self.questions.insert(idx, false);
        let c = self.render(claimant, &[])?;
        let idx = self.push(Speaker::Claimant, c, last_topic.as_deref());
        self.negations.insert(idx, false);

        let case = GoldCase {
            dialogue: Dialogue {
                id: self.id,
                utterances: self.utterances,
            },
            gold_spans: self.spans,
            gold_topics: self.topics,
            gold_questions: self.questions,
            gold_negations: self.negations,
            gold_report: self.report,
        };
        case.validate()?;
        Ok(case)
    }

    /// Assessor question followed by the claimant's answer. Returns the
    /// number of entity mentions produced.
    fn question_round(&mut self, topic: &str, q: &QuestionTemplate) -> Result<usize> {
        let asked = self.render(q.question, &[])?;
        let asked_mentions: Vec<Mention> = asked.mentions.iter().map(|(m, _)| m.clone()).collect();
        let idx = self.push(Speaker::Assessor, asked, Some(topic));
        self.questions.insert(idx, true);

        let drawn = self.rng.gen_bool(self.config.negation_rate);
        let negative = if q.negative.is_empty() {
            false
        } else {
            drawn || q.positive.is_empty()
        };
        let pool = if negative { q.negative } else { q.positive };
        let template = *pool.choose(&mut self.rng).unwrap();
        let answer = self.render(template, &asked_mentions)?;
        let answer_mentions: Vec<Mention> =
            answer.mentions.iter().map(|(m, _)| m.clone()).collect();
        let idx = self.push(Speaker::Claimant, answer, Some(topic));
        self.negations.insert(idx, negative);

        if !negative {
            for m in asked_mentions.iter().chain(&answer_mentions) {
                self.report_value(topic, m);
            }
        }
        Ok(asked_mentions.len() + answer_mentions.len())
    }

    fn statement_round(&mut self, topic: &str, statement: &str) -> Result<usize> {
        let said = self.render(statement, &[])?;
        let mentions: Vec<Mention> = said.mentions.iter().map(|(m, _)| m.clone()).collect();
        let idx = self.push(Speaker::Assessor, said, Some(topic));
        self.questions.insert(idx, false);
        for m in &mentions {
            self.report_value(topic, m);
        }
        let ack = *templates::CLAIMANT_ACKS.choose(&mut self.rng).unwrap();
        let reply = self.render(ack, &[])?;
        let idx = self.push(Speaker::Claimant, reply, Some(topic));
        self.negations.insert(idx, false);
        Ok(mentions.len())
    }

    fn report_value(&mut self, topic: &str, mention: &Mention) {
        if let Some(field) = self.schema.field_for(topic, mention.etype) {
            let values = self.report.entry(field.field_id).or_default();
            if !values.contains(&mention.value) {
                values.push(mention.value.clone());
            }
        }
    }

    fn push(&mut self, speaker: Speaker, rendered: Rendered, topic: Option<&str>) -> u64 {
        let index = self.utterances.len() as u64;
        for (mention, range) in rendered.mentions {
            if let Some((start, end)) = range {
                self.spans.push(GoldSpan {
                    utterance_index: index,
                    char_start: start,
                    char_end: end,
                    etype: mention.etype,
                    surface: rendered.text[start..end].to_string(),
                    link: mention.link,
                });
            }
        }
        if let Some(t) = topic {
            self.topics.insert(index, t.to_string());
        }
        self.utterances.push(Utterance {
            index,
            speaker,
            text: rendered.text.clone(),
            timestamp_ms: self.clock_ms,
        });
        self.clock_ms += 1200 + 45 * rendered.text.len() as u64;
        index
    }

    fn render(&mut self, template: &str, previous: &[Mention]) -> Result<Rendered> {
        let utt_index = self.utterances.len() as u64;
        let mut clean = String::new();
        let mut noisy = String::new();
        let mut mentions = Vec::new();
        let mut clean_mentions = Vec::new();
        for (piece_no, piece) in parse_template(template)?.into_iter().enumerate() {
            let (surface, mention) = match piece {
                Piece::Text(t) => (t.to_string(), None),
                Piece::Fresh(etype) => {
                    let (s, m) = self.fresh(etype)?;
                    (s, Some(m))
                }
                Piece::Repeat(etype) => match previous.iter().find(|m| m.etype == etype) {
                    Some(m) => (self.surface_for(m), Some(m.clone())),
                    None => {
                        let (s, m) = self.fresh(etype)?;
                        (s, Some(m))
                    }
                },
            };
            let corrupted = if self.config.noise.char_error_rate > 0.0 {
                let seed = mix_seed(self.noise_base ^ (utt_index << 8) ^ piece_no as u64);
                corrupt_text(&surface, &self.config.noise.with_seed(seed))
            } else {
                surface.clone()
            };
            if let Some(m) = mention {
                clean_mentions.push((m.clone(), Some((clean.len(), clean.len() + surface.len()))));
                let range =
                    (!corrupted.is_empty()).then(|| (noisy.len(), noisy.len() + corrupted.len()));
                mentions.push((m, range));
            }
            clean.push_str(&surface);
            noisy.push_str(&corrupted);
        }
        if noisy.trim().is_empty() {
            return Ok(Rendered {
                text: clean,
                mentions: clean_mentions,
            });
        }
        Ok(Rendered {
            text: noisy,
            mentions,
        })
    }

    fn surface_for(&mut self, mention: &Mention) -> String {
        match &mention.link {
            GoldLink::Verbatim { value } => value.clone(),
            GoldLink::Kb { id } => {
                let entry = self.by_type[&mention.etype]
                    .iter()
                    .find(|e| &e.id == id)
                    .expect("mention comes from the knowledge base");
                entry.canonical.clone()
            }
        }
    }

    fn fresh(&mut self, etype: EntityType) -> Result<(String, Mention)> {
        if etype == EntityType::Date {
            for _ in 0..64 {
                let surface = self.synth_date();
                let value = normalize_date(&surface).expect("synthesized dates parse");
                if self.used.insert((etype, value.clone())) {
                    let mention = Mention {
                        etype,
                        value: value.clone(),
                        link: GoldLink::Verbatim { value },
                    };
                    return Ok((surface, mention));
                }
            }
            return Err(Error::Generation("could not draw a fresh date".into()));
        }
        let entries = self
            .by_type
            .get(&etype)
            .ok_or_else(|| Error::Generation(format!("knowledge base has no {etype} entries")))?;
        let available: Vec<&&KbEntry> = entries
            .iter()
            .filter(|e| !self.used.contains(&(etype, e.canonical.clone())))
            .collect();
        let entry = **available.choose(&mut self.rng).ok_or_else(|| {
            Error::Generation(format!(
                "knowledge base has too few {etype} entries for one dialogue"
            ))
        })?;
        self.used.insert((etype, entry.canonical.clone()));
        let surface = if !entry.aliases.is_empty() && self.rng.gen_bool(self.config.alias_rate) {
            entry.aliases.choose(&mut self.rng).unwrap().clone()
        } else {
            entry.canonical.clone()
        };
        let mention = Mention {
            etype,
            value: entry.canonical.clone(),
            link: GoldLink::Kb {
                id: entry.id.clone(),
            },
        };
        Ok((surface, mention))
    }

    fn synth_date(&mut self) -> String {
        let roll: f64 = self.rng.gen();
        if roll < 0.15 {
            let day = WEEKDAYS.choose(&mut self.rng).unwrap();
            return format!("last {day}");
        }
        let year = self.rng.gen_range(2005..=2022);
        let month = self.rng.gen_range(1..=12);
        let day = self.rng.gen_range(1..=28);
        if roll < 0.3 {
            format!("{year}/{month}/{day}")
        } else {
            format!("{year}-{month:02}-{day:02}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_kb, KbGenConfig};

    fn setup() -> (ReportSchema, Vec<KbEntry>) {
        (
            ReportSchema::default_schema(),
            generate_kb(&KbGenConfig::default()).unwrap(),
        )
    }

    #[test]
    fn spans_match_surfaces_under_noise() {
        let (schema, kb) = setup();
        let cfg = GeneratorConfig::new(5, 0.5, NoiseConfig::default(), 9);
        for case in generate_corpus(&schema, &kb, &cfg).unwrap() {
            case.validate().unwrap();
            assert!(!case.gold_spans.is_empty());
        }
    }

    #[test]
    fn visits_every_topic_in_order() {
        let (schema, kb) = setup();
        let cfg = GeneratorConfig::new(2, 0.3, NoiseConfig::clean(), 1);
        for case in generate_corpus(&schema, &kb, &cfg).unwrap() {
            let mut order: Vec<&str> = Vec::new();
            for t in case.gold_topics.values() {
                if order.last() != Some(&t.as_str()) {
                    order.push(t);
                }
            }
            assert_eq!(order, schema.topic_ids());
        }
    }

    #[test]
    fn missing_kb_type_is_a_generation_error() {
        let (schema, kb) = setup();
        let kb: Vec<KbEntry> = kb
            .into_iter()
            .filter(|e| e.etype != EntityType::Hos)
            .collect();
        let cfg = GeneratorConfig::new(1, 0.0, NoiseConfig::clean(), 1);
        assert!(matches!(
            generate_corpus(&schema, &kb, &cfg),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn keyword_count_tracks_target() {
        let (schema, kb) = setup();
        let cfg = GeneratorConfig::new(20, 0.3, NoiseConfig::clean(), 5);
        let cases = generate_corpus(&schema, &kb, &cfg).unwrap();
        let avg = cases.iter().map(|c| c.gold_spans.len()).sum::<usize>() as f64 / 20.0;
        assert!((22.0..=40.0).contains(&avg), "average keywords {avg}");
    }
}
