use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::text_ids;
use crate::error::{Error, Result};
use crate::neural::{
    affine, affine_backward, bce_with_logit, grad_reverse, sgd_step_where, softmax, softmax_ce,
    xavier, EncoderRole, EncoderTrace, MeanPoolEncoder, ParameterStore, Section, TrainConfig,
    Vocab,
};
use crate::segmentation::add_grad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QidMode {
    Single,
    Mtl,
    AdvMtl,
}

impl QidMode {
    pub const ALL: [QidMode; 3] = [QidMode::Single, QidMode::Mtl, QidMode::AdvMtl];

    pub fn as_str(self) -> &'static str {
        match self {
            QidMode::Single => "single",
            QidMode::Mtl => "mtl",
            QidMode::AdvMtl => "adv_mtl",
        }
    }

    /// Model-file section holding a classifier of this mode.
    pub fn section(self) -> &'static str {
        match self {
            QidMode::Single => "qid.single",
            QidMode::Mtl => "qid.mtl",
            QidMode::AdvMtl => "qid.adv",
        }
    }
}

impl fmt::Display for QidMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(QidMode::Single),
            "mtl" => Ok(QidMode::Mtl),
            "adv" | "adv_mtl" => Ok(QidMode::AdvMtl),
            other => Err(Error::Invalid(format!(
                "unknown question-classifier mode `{other}`"
            ))),
        }
    }
}

/// One assessor utterance with its topic index and question label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QidExample {
    pub text: String,
    pub topic: usize,
    pub is_question: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuestionPrediction {
    pub prob: f64,
    pub is_question: bool,
}

/// How the discriminator loss reaches the shared encoder in a backward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdvTerm {
    None,
    /// Through gradient reversal with the given lambda.
    Reversed(f64),
    /// Unreversed: the gradient the discriminator objective alone sends.
    Plain,
}

/// Encoded training example: token ids, topic, 0/1 target.
pub type Encoded = (Vec<usize>, usize, f64);

const DISC_U: &str = "qid.disc.u";
const DISC_B: &str = "qid.disc.b";

pub fn is_discriminator(name: &str) -> bool {
    name.starts_with("qid.disc.")
}

pub fn is_shared(name: &str) -> bool {
    name.starts_with("qid.shared.")
}

#[derive(Clone, Debug)]
pub struct QuestionClassifier {
    pub mode: QidMode,
    pub topics: Vec<String>,
    pub vocab: Vocab,
    pub embed_dim: usize,
    pub dim: usize,
    pub params: ParameterStore,
    pub warnings: Vec<String>,
}

struct Forward {
    shared: EncoderTrace,
    private: Option<EncoderTrace>,
    input: Vec<f64>,
    logit: f64,
}

impl QuestionClassifier {
    /// Parameters are drawn in a fixed order: shared encoder, then each
    /// topic's private encoder and head, then the discriminator. A
    /// discriminator therefore never perturbs the other initial values.
    pub fn init(
        mode: QidMode,
        topics: Vec<String>,
        vocab: Vocab,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if topics.is_empty() {
            return Err(Error::Invalid(
                "question classifier needs at least one topic".into(),
            ));
        }
        let mut model = QuestionClassifier {
            mode,
            topics,
            vocab,
            embed_dim: cfg.embed_dim,
            dim: cfg.dim,
            params: ParameterStore::new(),
            warnings: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        model.shared().init(&mut model.params, &mut rng)?;
        let heads = if mode == QidMode::Single {
            1
        } else {
            model.topics.len()
        };
        let input = model.head_input_dim();
        for k in 0..heads {
            if mode != QidMode::Single {
                model.private(k).init(&mut model.params, &mut rng)?;
            }
            let (w, b) = head_names(k);
            model
                .params
                .insert_uniform(w, &[1, input], xavier(1, input), &mut rng)?;
            model.params.insert_values(b, &[1], vec![0.0])?;
        }
        if mode == QidMode::AdvMtl {
            let k = model.topics.len();
            model
                .params
                .insert_uniform(DISC_U, &[k, model.dim], xavier(k, model.dim), &mut rng)?;
            model.params.insert_values(DISC_B, &[k], vec![0.0; k])?;
        }
        Ok(model)
    }

    pub fn shared(&self) -> MeanPoolEncoder {
        MeanPoolEncoder::new(
            "qid.shared",
            EncoderRole::Shared,
            self.vocab.len(),
            self.embed_dim,
            self.dim,
        )
    }

    pub fn private(&self, k: usize) -> MeanPoolEncoder {
        MeanPoolEncoder::new(
            format!("qid.private.{k}"),
            EncoderRole::Private,
            self.vocab.len(),
            self.embed_dim,
            self.dim,
        )
    }

    fn head_input_dim(&self) -> usize {
        if self.mode == QidMode::Single {
            self.dim
        } else {
            2 * self.dim
        }
    }

    fn head_index(&self, topic: usize) -> usize {
        if self.mode == QidMode::Single {
            0
        } else {
            topic
        }
    }

    pub fn topic_index(&self, topic: &str) -> Result<usize> {
        self.topics
            .iter()
            .position(|t| t == topic)
            .ok_or_else(|| Error::UnknownTopic(topic.to_string()))
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        text_ids(&self.vocab, text)
    }

    fn forward(&self, store: &ParameterStore, ids: &[usize], topic: usize) -> Result<Forward> {
        let shared = self.shared().forward(store, ids)?;
        let (private, input) = if self.mode == QidMode::Single {
            (None, shared.out.clone())
        } else {
            let p = self.private(topic).forward(store, ids)?;
            let mut input = shared.out.clone();
            input.extend_from_slice(&p.out);
            (Some(p), input)
        };
        let (w, b) = head_names(self.head_index(topic));
        let logit = affine(&store.get(&w)?.value, &store.get(&b)?.value, &input)[0];
        Ok(Forward {
            shared,
            private,
            input,
            logit,
        })
    }

    /// Probability under the head of `topic`.
    pub fn prob_ids(&self, ids: &[usize], topic: usize) -> Result<f64> {
        if topic >= self.topics.len() {
            return Err(Error::UnknownTopic(topic.to_string()));
        }
        Ok(crate::neural::sigmoid(
            self.forward(&self.params, ids, topic)?.logit,
        ))
    }

    /// `is_question` is `prob > 0.5`. Single mode ignores the topic; the
    /// multi-task modes average all heads when no topic is known yet.
    pub fn classify(&self, text: &str, topic: Option<&str>) -> Result<QuestionPrediction> {
        let ids = self.ids(text);
        let prob = match (self.mode, topic) {
            (QidMode::Single, t) => {
                if let Some(t) = t {
                    self.topic_index(t)?;
                }
                self.prob_ids(&ids, 0)?
            }
            (_, Some(t)) => self.prob_ids(&ids, self.topic_index(t)?)?,
            (_, None) => {
                let mut sum = 0.0;
                for k in 0..self.topics.len() {
                    sum += self.prob_ids(&ids, k)?;
                }
                sum / self.topics.len() as f64
            }
        };
        Ok(QuestionPrediction {
            prob,
            is_question: prob > 0.5,
        })
    }

    /// Discriminator distribution over topics given the shared encoding.
    pub fn discriminate(&self, store: &ParameterStore, ids: &[usize]) -> Result<Vec<f64>> {
        let v = self.shared().forward(store, ids)?.out;
        Ok(softmax(&affine(
            &store.get(DISC_U)?.value,
            &store.get(DISC_B)?.value,
            &v,
        )))
    }

    /// Mean task BCE and mean discriminator CE over `batch` under `store`.
    pub fn losses(&self, store: &ParameterStore, batch: &[Encoded]) -> Result<(f64, f64)> {
        let n = batch.len().max(1) as f64;
        let mut task = 0.0;
        let mut adv = 0.0;
        for (ids, topic, y) in batch {
            let f = self.forward(store, ids, *topic)?;
            task += bce_with_logit(f.logit, *y).0;
            if self.mode == QidMode::AdvMtl {
                let logits = affine(
                    &store.get(DISC_U)?.value,
                    &store.get(DISC_B)?.value,
                    &f.shared.out,
                );
                adv += softmax_ce(&logits, *topic)?.loss;
            }
        }
        Ok((task / n, adv / n))
    }

    /// Adds gradients of the mean batch loss to the parameter store.
    /// `task` selects the BCE objective; `adv` selects how the
    /// discriminator CE is included. Discriminator parameters always receive
    /// the plain CE gradient when `adv` is not `None`.
    pub fn backprop_batch(&mut self, batch: &[Encoded], task: bool, adv: AdvTerm) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let scale = 1.0 / batch.len() as f64;
        let use_adv = adv != AdvTerm::None && self.mode == QidMode::AdvMtl;
        for (ids, topic, y) in batch {
            let f = self.forward(&self.params, ids, *topic)?;
            let mut d_shared = vec![0.0; self.dim];
            if task {
                let (_, dz, _) = bce_with_logit(f.logit, *y);
                let (wn, bn) = head_names(self.head_index(*topic));
                let w = self.params.get(&wn)?.clone();
                let mut dw = vec![0.0; w.len()];
                let mut db = vec![0.0; 1];
                let d_input = affine_backward(&w, &f.input, &[dz * scale], &mut dw, &mut db);
                add_grad(&mut self.params, &wn, &dw)?;
                add_grad(&mut self.params, &bn, &db)?;
                for (d, g) in d_shared.iter_mut().zip(&d_input[..self.dim]) {
                    *d += g;
                }
                if let Some(p) = &f.private {
                    self.private(*topic)
                        .backward(&mut self.params, p, &d_input[self.dim..])?;
                }
            }
            if use_adv {
                let u = self.params.get(DISC_U)?.clone();
                let logits = affine(&u.value, &self.params.get(DISC_B)?.value, &f.shared.out);
                let ce = softmax_ce(&logits, *topic)?;
                let dl: Vec<f64> = ce.grad.iter().map(|g| g * scale).collect();
                let mut du = vec![0.0; u.len()];
                let mut db = vec![0.0; self.topics.len()];
                let dv = affine_backward(&u, &f.shared.out, &dl, &mut du, &mut db);
                add_grad(&mut self.params, DISC_U, &du)?;
                add_grad(&mut self.params, DISC_B, &db)?;
                let to_shared = match adv {
                    AdvTerm::Reversed(lambda) => grad_reverse(&dv, lambda),
                    _ => dv,
                };
                for (d, g) in d_shared.iter_mut().zip(&to_shared) {
                    *d += g;
                }
            }
            if task || use_adv {
                self.shared()
                    .backward(&mut self.params, &f.shared, &d_shared)?;
            }
        }
        Ok(())
    }

    pub fn accuracy(&self, examples: &[QidExample]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for e in examples {
            let p = self.prob_ids(&self.ids(&e.text), e.topic)?;
            if (p > 0.5) == e.is_question {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    /// Fraction of examples whose topic the discriminator recovers.
    pub fn discriminator_accuracy(&self, examples: &[QidExample]) -> Result<f64> {
        if self.mode != QidMode::AdvMtl || examples.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for e in examples {
            let probs = self.discriminate(&self.params, &self.ids(&e.text))?;
            let best = probs
                .iter()
                .enumerate()
                .fold(
                    (0, f64::MIN),
                    |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc },
                )
                .0;
            correct += usize::from(best == e.topic);
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new(self.mode.section());
        s.meta.insert("mode".into(), self.mode.as_str().into());
        s.meta.insert("topics".into(), self.topics.join(" "));
        s.meta.insert("vocab".into(), self.vocab.to_line());
        s.meta
            .insert("embed_dim".into(), self.embed_dim.to_string());
        s.meta.insert("dim".into(), self.dim.to_string());
        s.meta.insert("warnings".into(), self.warnings.join("; "));
        s.params = self.params.clone();
        s
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        let mode: QidMode = section.meta("mode")?.parse()?;
        let model = QuestionClassifier {
            mode,
            topics: section
                .meta("topics")?
                .split(' ')
                .map(str::to_string)
                .collect(),
            vocab: Vocab::from_line(section.meta("vocab")?)?,
            embed_dim: section.meta_parse("embed_dim")?,
            dim: section.meta_parse("dim")?,
            params: section.params.clone(),
            warnings: section
                .meta
                .get("warnings")
                .filter(|w| !w.is_empty())
                .map(|w| w.split("; ").map(str::to_string).collect())
                .unwrap_or_default(),
        };
        let (w, _) = head_names(0);
        model.params.get(&w)?;
        model.params.get(&model.shared().emb_name())?;
        Ok(model)
    }
}

fn head_names(k: usize) -> (String, String) {
    (format!("qid.head.{k}.w"), format!("qid.head.{k}.b"))
}

/// Per-epoch diagnostics of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Discriminator topic accuracy on the training set after each epoch.
    pub discriminator_accuracy: Vec<f64>,
}

/// Trains a classifier of `mode` on labelled examples. The multi-task
/// modes give each example's loss to its topic head. In adversarial mode
/// every batch takes one discriminator step, then one task step in which
/// the shared encoder also receives the reversed discriminator gradient.
pub fn train_question_classifier_on(
    mode: QidMode,
    examples: &[QidExample],
    topics: &[String],
    cfg: &TrainConfig,
) -> Result<(QuestionClassifier, TrainingLog)> {
    if examples.is_empty() {
        return Err(Error::EmptyInput(
            "no question-identification examples".into(),
        ));
    }
    let tokens: Vec<String> = examples
        .iter()
        .flat_map(|e| {
            crate::extraction::tokenize(&e.text)
                .tokens
                .into_iter()
                .map(|t| t.surface)
        })
        .collect();
    let vocab = Vocab::build(tokens.iter().map(String::as_str));
    let mut model = QuestionClassifier::init(mode, topics.to_vec(), vocab, cfg)?;
    if mode != QidMode::Single {
        for (k, t) in topics.iter().enumerate() {
            if !examples.iter().any(|e| e.topic == k) {
                let msg = format!("topic `{t}` has no training examples; its private encoder stays at initialization");
                log::warn!("{msg}");
                model.warnings.push(msg);
            }
        }
    }
    if let Some(e) = examples.iter().find(|e| e.topic >= topics.len()) {
        return Err(Error::UnknownTopic(e.topic.to_string()));
    }
    let encoded: Vec<Encoded> = examples
        .iter()
        .map(|e| {
            (
                model.ids(&e.text),
                e.topic,
                if e.is_question { 1.0 } else { 0.0 },
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(crate::corpus::mix_seed(cfg.seed.wrapping_add(1)));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut log = TrainingLog::default();
    let lr = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Encoded> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            if mode == QidMode::AdvMtl {
                model.backprop_batch(&batch, false, AdvTerm::Plain)?;
                sgd_step_where(&mut model.params, lr, is_discriminator)?;
                model.backprop_batch(&batch, true, AdvTerm::Reversed(cfg.adversarial_lambda))?;
                sgd_step_where(&mut model.params, lr, |n| !is_discriminator(n))?;
            } else {
                model.backprop_batch(&batch, true, AdvTerm::None)?;
                sgd_step_where(&mut model.params, lr, |_| true)?;
            }
        }
        if mode == QidMode::AdvMtl {
            log.discriminator_accuracy
                .push(model.discriminator_accuracy(examples)?);
        }
    }
    Ok((model, log))
}
