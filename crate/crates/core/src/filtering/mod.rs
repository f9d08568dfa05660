//! Learned gates of the state tracker: question identification per topic
//! and negation identification over a two-round window.

pub mod benchmark;
pub mod negation;
pub mod question;

pub use benchmark::{run_skewed_benchmark, skewed_benchmark, BenchmarkReport, SkewedBenchmark};
pub use negation::{
    negation_examples, train_negation_classifier, train_negation_classifier_on, NegationClassifier,
    NegationExample, NegationPrediction,
};
pub use question::{
    train_question_classifier_on, AdvTerm, QidExample, QidMode, QuestionClassifier,
    QuestionPrediction, TrainingLog,
};

use crate::corpus::{GoldCase, Speaker};
use crate::error::{Error, Result};
use crate::extraction::tokenize;
use crate::neural::vocab::EMPTY;
use crate::neural::{TrainConfig, Vocab};

/// Vocabulary ids of a text; a text without tokens maps to the empty marker.
pub(crate) fn text_ids(vocab: &Vocab, text: &str) -> Vec<usize> {
    let toks = tokenize(text);
    if toks.is_empty() {
        vec![EMPTY]
    } else {
        toks.tokens.iter().map(|t| vocab.id(&t.surface)).collect()
    }
}

/// Assessor utterances carrying both a question label and a gold topic.
pub fn qid_examples(cases: &[GoldCase], topics: &[String]) -> Result<Vec<QidExample>> {
    let mut out = Vec::new();
    for case in cases {
        for utt in &case.dialogue.utterances {
            if utt.speaker != Speaker::Assessor {
                continue;
            }
            let (Some(&is_question), Some(topic)) = (
                case.gold_questions.get(&utt.index),
                case.gold_topics.get(&utt.index),
            ) else {
                continue;
            };
            let topic = topics
                .iter()
                .position(|t| t == topic)
                .ok_or_else(|| Error::UnknownTopic(topic.clone()))?;
            out.push(QidExample {
                text: utt.text.clone(),
                topic,
                is_question,
            });
        }
    }
    Ok(out)
}

/// Trains a question classifier from gold cases over the given topic list.
pub fn train_question_classifier(
    mode: QidMode,
    cases: &[GoldCase],
    topics: &[String],
    cfg: &TrainConfig,
) -> Result<QuestionClassifier> {
    let examples = qid_examples(cases, topics)?;
    Ok(train_question_classifier_on(mode, &examples, topics, cfg)?.0)
}

pub fn classify_question(
    model: &QuestionClassifier,
    text: &str,
    topic: Option<&str>,
) -> Result<QuestionPrediction> {
    model.classify(text, topic)
}

pub fn classify_negation(
    model: &NegationClassifier,
    assessor_prev: &str,
    claimant_prev: &str,
    current: &str,
) -> Result<NegationPrediction> {
    model.classify(assessor_prev, claimant_prev, current)
}
