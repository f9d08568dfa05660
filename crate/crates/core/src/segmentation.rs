//! Topic segmentation: each assessor utterance is scored against the
//! standard questions of every topic; below the threshold the previous topic
//! carries over. Claimant turns always inherit the running topic.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{templates, Dialogue, GoldCase, ReportSchema, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::extraction::tokenize;
use crate::neural::{
    affine, affine_backward, sgd_step, softmax_ce, EncoderRole, MeanPoolEncoder, ParameterStore,
    Section, TrainConfig, Vocab,
};
use crate::FORMAT_HEADER;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardQuestionSet {
    /// Topics in schema order, each with its questions in file order.
    topics: Vec<(String, Vec<String>)>,
}

#[derive(Serialize, Deserialize)]
struct QuestionRecord {
    topic_id: String,
    question: String,
}

impl StandardQuestionSet {
    pub fn new(schema: &ReportSchema, pairs: &[(String, String)]) -> Result<Self> {
        let mut topics: Vec<(String, Vec<String>)> = schema
            .topic_ids()
            .into_iter()
            .map(|t| (t, Vec::new()))
            .collect();
        for (topic, question) in pairs {
            let slot = topics
                .iter_mut()
                .find(|(t, _)| t == topic)
                .ok_or_else(|| Error::UnknownTopic(topic.clone()))?;
            if question.trim().is_empty() {
                return Err(Error::Invalid(format!(
                    "blank standard question for `{topic}`"
                )));
            }
            slot.1.push(question.clone());
        }
        if let Some((t, _)) = topics.iter().find(|(_, qs)| qs.is_empty()) {
            return Err(Error::Invalid(format!(
                "topic `{t}` has no standard questions"
            )));
        }
        Ok(StandardQuestionSet { topics })
    }

    /// The built-in questions for the built-in topics.
    pub fn default_for(schema: &ReportSchema) -> Result<Self> {
        Self::new(schema, &templates::standard_questions())
    }

    pub fn topics(&self) -> &[(String, Vec<String>)] {
        &self.topics
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.topics
            .iter()
            .flat_map(|(t, qs)| qs.iter().map(move |q| (t.as_str(), q.as_str())))
    }

    pub fn parse(schema: &ReportSchema, text: &str) -> Result<Self> {
        let records: Vec<(usize, QuestionRecord)> =
            crate::corpus::parse_records(text, FORMAT_HEADER)?;
        let pairs: Vec<(String, String)> = records
            .into_iter()
            .map(|(_, r)| (r.topic_id, r.question))
            .collect();
        Self::new(schema, &pairs)
    }

    pub fn load(schema: &ReportSchema, path: &Path) -> Result<Self> {
        Self::parse(schema, &crate::corpus::read_file(path)?)
    }

    pub fn to_text(&self) -> String {
        let records: Vec<QuestionRecord> = self
            .pairs()
            .map(|(t, q)| QuestionRecord {
                topic_id: t.to_string(),
                question: q.to_string(),
            })
            .collect();
        crate::corpus::render_records(FORMAT_HEADER, &records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::corpus::write_file(path, &self.to_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Lexical,
    Trainable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub threshold: f64,
    pub scorer: ScorerKind,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            threshold: 0.5,
            scorer: ScorerKind::Lexical,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Invalid(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub utterance_index: u64,
    pub topic_id: Option<String>,
    pub best_score: f64,
    pub carried: bool,
}

fn grams(s: &str) -> HashMap<(char, char), usize> {
    let chars: Vec<char> = s.to_lowercase().chars().collect();
    let mut counts = HashMap::new();
    if chars.len() == 1 {
        counts.insert((chars[0], '\0'), 1);
    }
    for w in chars.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of lowercased character-bigram multisets. A
/// single-character string counts as one unigram.
pub fn similarity(a: &str, b: &str) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput(
            "similarity needs two non-empty strings".into(),
        ));
    }
    let (ga, gb) = (grams(a), grams(b));
    let dot: usize = ga
        .iter()
        .map(|(k, v)| v * gb.get(k).copied().unwrap_or(0))
        .sum();
    let sq = |g: &HashMap<(char, char), usize>| g.values().map(|v| v * v).sum::<usize>();
    // One square root of the exact integer product keeps identical inputs at 1.0.
    Ok((dot as f64 / ((sq(&ga) * sq(&gb)) as f64).sqrt()).clamp(0.0, 1.0))
}

pub trait Scorer {
    fn score(&self, a: &str, b: &str) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn score(&self, a: &str, b: &str) -> Result<f64> {
        similarity(a, b)
    }
}

/// Cosine of learned sentence encodings, mapped to `[0, 1]` as
/// `(1 + cos) / 2`. The encoder is trained as a topic classifier over
/// assessor utterances.
#[derive(Clone, Debug)]
pub struct TrainableScorer {
    pub vocab: Vocab,
    pub encoder: MeanPoolEncoder,
    pub params: ParameterStore,
}

impl TrainableScorer {
    fn ids(&self, text: &str) -> Vec<usize> {
        let toks = tokenize(text);
        let ids = self
            .vocab
            .ids(toks.tokens.iter().map(|t| t.surface.as_str()));
        if ids.is_empty() {
            vec![crate::neural::vocab::EMPTY]
        } else {
            ids
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.encoder.encode(&self.params, &self.ids(text))?.values)
    }

    pub fn train(cases: &[GoldCase], schema: &ReportSchema, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut examples: Vec<(String, usize)> = Vec::new();
        for case in cases {
            for utt in case
                .dialogue
                .utterances
                .iter()
                .filter(|u| u.speaker == Speaker::Assessor)
            {
                if let Some(t) = case
                    .gold_topics
                    .get(&utt.index)
                    .and_then(|t| schema.topic_index(t))
                {
                    examples.push((utt.text.clone(), t));
                }
            }
        }
        if examples.is_empty() {
            return Err(Error::EmptyInput(
                "no topic-labelled assessor utterances".into(),
            ));
        }
        let all_tokens: Vec<String> = examples
            .iter()
            .flat_map(|(t, _)| tokenize(t).tokens.into_iter().map(|t| t.surface))
            .collect();
        let vocab = Vocab::build(all_tokens.iter().map(String::as_str));
        let encoder = MeanPoolEncoder::new(
            "seg.enc",
            EncoderRole::Private,
            vocab.len(),
            cfg.embed_dim,
            cfg.dim,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParameterStore::new();
        encoder.init(&mut params, &mut rng)?;
        let k = schema.topics.len();
        params.insert_uniform(
            "seg.head.w",
            &[k, cfg.dim],
            crate::neural::xavier(k, cfg.dim),
            &mut rng,
        )?;
        params.insert_values("seg.head.b", &[k], vec![0.0; k])?;
        let mut scorer = TrainableScorer {
            vocab,
            encoder,
            params,
        };
        let encoded: Vec<(Vec<usize>, usize)> =
            examples.iter().map(|(t, y)| (scorer.ids(t), *y)).collect();
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let scale = 1.0 / batch.len() as f64;
                for &e in batch {
                    let (ids, y) = &encoded[e];
                    let trace = scorer.encoder.forward(&scorer.params, ids)?;
                    let w = scorer.params.get("seg.head.w")?.clone();
                    let b = &scorer.params.get("seg.head.b")?.value;
                    let ce = softmax_ce(&affine(&w.value, b, &trace.out), *y)?;
                    let dy: Vec<f64> = ce.grad.iter().map(|g| g * scale).collect();
                    let mut dw = vec![0.0; w.len()];
                    let mut db = vec![0.0; k];
                    let dv = affine_backward(&w, &trace.out, &dy, &mut dw, &mut db);
                    add_grad(&mut scorer.params, "seg.head.w", &dw)?;
                    add_grad(&mut scorer.params, "seg.head.b", &db)?;
                    scorer.encoder.backward(&mut scorer.params, &trace, &dv)?;
                }
                sgd_step(&mut scorer.params, cfg.learning_rate)?;
            }
        }
        Ok(scorer)
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("seg");
        s.meta.insert("vocab".into(), self.vocab.to_line());
        s.meta
            .insert("embed_dim".into(), self.encoder.embed_dim.to_string());
        s.meta.insert("dim".into(), self.encoder.dim.to_string());
        s.params = self.params.clone();
        s
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        let vocab = Vocab::from_line(section.meta("vocab")?)?;
        let encoder = MeanPoolEncoder::new(
            "seg.enc",
            EncoderRole::Private,
            vocab.len(),
            section.meta_parse("embed_dim")?,
            section.meta_parse("dim")?,
        );
        Ok(TrainableScorer {
            vocab,
            encoder,
            params: section.params.clone(),
        })
    }
}

pub(crate) fn add_grad(store: &mut ParameterStore, name: &str, grad: &[f64]) -> Result<()> {
    let p = store.get_mut(name)?;
    for (g, d) in p.grad.iter_mut().zip(grad) {
        *g += d;
    }
    Ok(())
}

impl Scorer for TrainableScorer {
    fn score(&self, a: &str, b: &str) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyInput(
                "similarity needs two non-empty strings".into(),
            ));
        }
        let (ea, eb) = (self.embed(a)?, self.embed(b)?);
        let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
        let na = ea.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = eb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Ok(if a == b { 1.0 } else { 0.5 });
        }
        Ok(((1.0 + dot / (na * nb)) / 2.0).clamp(0.0, 1.0))
    }
}

/// Scores an assessor utterance with the lexical scorer.
pub fn assign_topic(
    utt: &Utterance,
    prev: Option<&str>,
    sq: &StandardQuestionSet,
    cfg: &SegmenterConfig,
) -> Result<TopicAssignment> {
    assign_topic_with(&LexicalScorer, utt, prev, sq, cfg)
}

/// Switches topic only when the best score is strictly above the threshold;
/// ties keep the earliest topic and question.
pub fn assign_topic_with(
    scorer: &dyn Scorer,
    utt: &Utterance,
    prev: Option<&str>,
    sq: &StandardQuestionSet,
    cfg: &SegmenterConfig,
) -> Result<TopicAssignment> {
    let mut best: Option<(f64, &str)> = None;
    for (topic, question) in sq.pairs() {
        let s = scorer.score(&utt.text, question)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, topic));
        }
    }
    let (score, topic) = best.unwrap_or((0.0, ""));
    if score > cfg.threshold {
        Ok(TopicAssignment {
            utterance_index: utt.index,
            topic_id: Some(topic.to_string()),
            best_score: score,
            carried: false,
        })
    } else {
        Ok(TopicAssignment {
            utterance_index: utt.index,
            topic_id: prev.map(str::to_string),
            best_score: score,
            carried: true,
        })
    }
}

pub fn segment_dialogue(
    d: &Dialogue,
    sq: &StandardQuestionSet,
    cfg: &SegmenterConfig,
) -> Result<Vec<TopicAssignment>> {
    segment_dialogue_with(&LexicalScorer, d, sq, cfg)
}

pub fn segment_dialogue_with(
    scorer: &dyn Scorer,
    d: &Dialogue,
    sq: &StandardQuestionSet,
    cfg: &SegmenterConfig,
) -> Result<Vec<TopicAssignment>> {
    let mut running: Option<String> = None;
    let mut out = Vec::with_capacity(d.utterances.len());
    for utt in &d.utterances {
        let a = match utt.speaker {
            Speaker::Assessor => assign_topic_with(scorer, utt, running.as_deref(), sq, cfg)?,
            Speaker::Claimant => TopicAssignment {
                utterance_index: utt.index,
                topic_id: running.clone(),
                best_score: 0.0,
                carried: true,
            },
        };
        running = a.topic_id.clone();
        out.push(a);
    }
    Ok(out)
}

/// Fraction of utterances whose assigned topic equals the gold topic
/// (utterances without a gold topic must stay unassigned).
pub fn segmentation_accuracy(case: &GoldCase, assignments: &[TopicAssignment]) -> f64 {
    if assignments.is_empty() {
        return 0.0;
    }
    let correct = assignments
        .iter()
        .filter(|a| a.topic_id.as_ref() == case.gold_topics.get(&a.utterance_index))
        .count();
    correct as f64 / assignments.len() as f64
}
