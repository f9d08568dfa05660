//! Synthetic skewed-topic benchmark for question identification.
//!
//! The text hints at its topic only through an optional marker word. Each
//! example holds an optional generic cue word, one cue whose
//! polarity flips with topic parity, a distractor word of another topic and
//! a filler. In training, a marker word of the example's own topic
//! correlates with the label; in the test split it is independent of the
//! label. Topics differ in training size and label prior; the test split is
//! balanced.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::question::{train_question_classifier_on, QidExample, QidMode};
use crate::error::Result;
use crate::neural::TrainConfig;

pub const TOPICS: usize = 6;
const TRAIN_COUNTS: [usize; TOPICS] = [400, 200, 100, 50, 25, 25];
const QUESTION_PRIOR: [f64; TOPICS] = [0.8, 0.3, 0.7, 0.2, 0.6, 0.4];
const TEST_PER_TOPIC: usize = 60;
const TOPIC_WORDS: usize = 5;
const AMBIGUOUS_CUES: usize = 8;
const GENERIC_QUESTION: &[&str] = &["did", "when", "which", "could"];
const GENERIC_STATEMENT: &[&str] = &["i", "my", "we", "was"];
const GENERIC_RATE: f64 = 0.5;
const SPURIOUS_RATE: f64 = 0.8;
const FILLERS: &[&str] = &["the", "a", "then", "so", "about"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewedBenchmark {
    pub topics: Vec<String>,
    pub train: Vec<QidExample>,
    pub test: Vec<QidExample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub single: f64,
    pub mtl: f64,
    pub adv_mtl: f64,
    /// Discriminator accuracy after each adversarial epoch.
    pub discriminator_accuracy: Vec<f64>,
}

impl BenchmarkReport {
    pub fn accuracy(&self, mode: QidMode) -> f64 {
        match mode {
            QidMode::Single => self.single,
            QidMode::Mtl => self.mtl,
            QidMode::AdvMtl => self.adv_mtl,
        }
    }
}

fn example(rng: &mut ChaCha8Rng, topic: usize, is_question: bool, spurious: bool) -> QidExample {
    let mut words: Vec<String> = Vec::new();
    if rng.gen_bool(GENERIC_RATE) {
        let pool = if is_question {
            GENERIC_QUESTION
        } else {
            GENERIC_STATEMENT
        };
        words.push(pool.choose(rng).unwrap().to_string());
    }
    let parity = usize::from(!is_question);
    let cue = loop {
        let c = rng.gen_range(0..AMBIGUOUS_CUES);
        if (c + topic) % 2 == parity {
            break c;
        }
    };
    words.push(format!("cue{cue}"));
    let marker_rate = if !spurious {
        0.5
    } else if (topic % 2 == 0) == is_question {
        SPURIOUS_RATE
    } else {
        1.0 - SPURIOUS_RATE
    };
    if rng.gen_bool(marker_rate) {
        words.push(format!("t{topic}w{}", rng.gen_range(0..TOPIC_WORDS)));
    }
    let other = (topic + rng.gen_range(1..TOPICS)) % TOPICS;
    words.push(format!("t{other}w{}", rng.gen_range(0..TOPIC_WORDS)));
    words.push(FILLERS.choose(rng).unwrap().to_string());
    words.shuffle(rng);
    QidExample {
        text: words.join(" "),
        topic,
        is_question,
    }
}

pub fn skewed_benchmark(seed: u64) -> SkewedBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for topic in 0..TOPICS {
        for _ in 0..TRAIN_COUNTS[topic] {
            let q = rng.gen_bool(QUESTION_PRIOR[topic]);
            train.push(example(&mut rng, topic, q, true));
        }
        for i in 0..TEST_PER_TOPIC {
            test.push(example(&mut rng, topic, i % 2 == 0, false));
        }
    }
    SkewedBenchmark {
        topics: (0..TOPICS).map(|k| format!("topic{k}")).collect(),
        train,
        test,
    }
}

fn test_accuracy(
    mode: QidMode,
    bench: &SkewedBenchmark,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let (model, log) = train_question_classifier_on(mode, &bench.train, &bench.topics, cfg)?;
    Ok((model.accuracy(&bench.test)?, log.discriminator_accuracy))
}

/// Trains all three modes on the benchmark of `seed` and reports balanced
/// test accuracy.
pub fn run_skewed_benchmark(seed: u64, cfg: &TrainConfig) -> Result<BenchmarkReport> {
    let bench = skewed_benchmark(seed);
    let (single, _) = test_accuracy(QidMode::Single, &bench, cfg)?;
    let (mtl, _) = test_accuracy(QidMode::Mtl, &bench, cfg)?;
    let (adv_mtl, discriminator_accuracy) = test_accuracy(QidMode::AdvMtl, &bench, cfg)?;
    Ok(BenchmarkReport {
        single,
        mtl,
        adv_mtl,
        discriminator_accuracy,
    })
}
