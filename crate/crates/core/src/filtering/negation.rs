use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{GoldCase, Speaker};
use crate::error::{Error, Result};
use crate::extraction::tokenize;
use crate::neural::vocab::{EMPTY, SEP};
use crate::neural::{
    affine, affine_backward, bce_with_logit, sgd_step, sigmoid, xavier, EncoderRole,
    MeanPoolEncoder, ParameterStore, Section, TrainConfig, Vocab,
};
use crate::segmentation::add_grad;

/// A claimant utterance with the two preceding turns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationExample {
    pub assessor_prev: String,
    pub claimant_prev: String,
    pub current: String,
    pub negative: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegationPrediction {
    pub prob: f64,
    pub is_negative: bool,
}

/// Binary classifier over the window
/// `assessor_prev SEP claimant_prev SEP current`.
///
/// The encoder's embedding table has three blocks of the vocabulary size:
/// tokens of the current utterance use the first block, the previous
/// assessor turn the second, the previous claimant turn the third, so mean
/// pooling still knows which turn a word came from.
#[derive(Clone, Debug)]
pub struct NegationClassifier {
    pub vocab: Vocab,
    pub embed_dim: usize,
    pub dim: usize,
    pub params: ParameterStore,
}

const HEAD_W: &str = "neg.head.w";
const HEAD_B: &str = "neg.head.b";

impl NegationClassifier {
    pub fn init(vocab: Vocab, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut model = NegationClassifier {
            vocab,
            embed_dim: cfg.embed_dim,
            dim: cfg.dim,
            params: ParameterStore::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        model.encoder().init(&mut model.params, &mut rng)?;
        model
            .params
            .insert_uniform(HEAD_W, &[1, cfg.dim], xavier(1, cfg.dim), &mut rng)?;
        model.params.insert_values(HEAD_B, &[1], vec![0.0])?;
        Ok(model)
    }

    pub fn encoder(&self) -> MeanPoolEncoder {
        MeanPoolEncoder::new(
            "neg.enc",
            EncoderRole::Private,
            3 * self.vocab.len(),
            self.embed_dim,
            self.dim,
        )
    }

    fn segment(&self, text: &str, block: usize, out: &mut Vec<usize>) {
        let offset = block * self.vocab.len();
        let toks = tokenize(text);
        if toks.is_empty() {
            out.push(offset + EMPTY);
        } else {
            out.extend(
                toks.tokens
                    .iter()
                    .map(|t| offset + self.vocab.id(&t.surface)),
            );
        }
    }

    /// Token ids of the full window; blank history slots become the
    /// empty marker.
    pub fn window_ids(
        &self,
        assessor_prev: &str,
        claimant_prev: &str,
        current: &str,
    ) -> Vec<usize> {
        let v = self.vocab.len();
        let mut ids = Vec::new();
        self.segment(assessor_prev, 1, &mut ids);
        ids.push(v + SEP);
        self.segment(claimant_prev, 2, &mut ids);
        ids.push(2 * v + SEP);
        self.segment(current, 0, &mut ids);
        ids
    }

    fn logit(&self, store: &ParameterStore, ids: &[usize]) -> Result<f64> {
        let v = self.encoder().forward(store, ids)?.out;
        Ok(affine(&store.get(HEAD_W)?.value, &store.get(HEAD_B)?.value, &v)[0])
    }

    /// `is_negative` is `prob > 0.5`.
    pub fn classify(
        &self,
        assessor_prev: &str,
        claimant_prev: &str,
        current: &str,
    ) -> Result<NegationPrediction> {
        if current.trim().is_empty() {
            return Err(Error::EmptyInput(
                "negation needs a non-empty current utterance".into(),
            ));
        }
        let prob = sigmoid(self.logit(
            &self.params,
            &self.window_ids(assessor_prev, claimant_prev, current),
        )?);
        Ok(NegationPrediction {
            prob,
            is_negative: prob > 0.5,
        })
    }

    /// Mean BCE over encoded windows.
    pub fn loss(&self, store: &ParameterStore, batch: &[(Vec<usize>, f64)]) -> Result<f64> {
        let mut total = 0.0;
        for (ids, y) in batch {
            total += bce_with_logit(self.logit(store, ids)?, *y).0;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    pub fn backprop_batch(&mut self, batch: &[(Vec<usize>, f64)]) -> Result<()> {
        let scale = 1.0 / batch.len().max(1) as f64;
        let enc = self.encoder();
        for (ids, y) in batch {
            let trace = enc.forward(&self.params, ids)?;
            let w = self.params.get(HEAD_W)?.clone();
            let z = affine(&w.value, &self.params.get(HEAD_B)?.value, &trace.out)[0];
            let (_, dz, _) = bce_with_logit(z, *y);
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0];
            let dv = affine_backward(&w, &trace.out, &[dz * scale], &mut dw, &mut db);
            add_grad(&mut self.params, HEAD_W, &dw)?;
            add_grad(&mut self.params, HEAD_B, &db)?;
            enc.backward(&mut self.params, &trace, &dv)?;
        }
        Ok(())
    }

    pub fn accuracy(&self, examples: &[NegationExample]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for e in examples {
            let p = self.classify(&e.assessor_prev, &e.claimant_prev, &e.current)?;
            correct += usize::from(p.is_negative == e.negative);
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("neg");
        s.meta.insert("vocab".into(), self.vocab.to_line());
        s.meta
            .insert("embed_dim".into(), self.embed_dim.to_string());
        s.meta.insert("dim".into(), self.dim.to_string());
        s.params = self.params.clone();
        s
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        let model = NegationClassifier {
            vocab: Vocab::from_line(section.meta("vocab")?)?,
            embed_dim: section.meta_parse("embed_dim")?,
            dim: section.meta_parse("dim")?,
            params: section.params.clone(),
        };
        model.params.get(HEAD_W)?;
        model.params.get(&model.encoder().emb_name())?;
        Ok(model)
    }
}

/// Windows for every claimant utterance with a negation label. History
/// slots hold the latest assessor and the latest earlier claimant turn.
pub fn negation_examples(cases: &[GoldCase]) -> Vec<NegationExample> {
    let mut out = Vec::new();
    for case in cases {
        let mut assessor_prev = String::new();
        let mut claimant_prev = String::new();
        for utt in &case.dialogue.utterances {
            match utt.speaker {
                Speaker::Assessor => assessor_prev = utt.text.clone(),
                Speaker::Claimant => {
                    if let Some(&negative) = case.gold_negations.get(&utt.index) {
                        out.push(NegationExample {
                            assessor_prev: assessor_prev.clone(),
                            claimant_prev: claimant_prev.clone(),
                            current: utt.text.clone(),
                            negative,
                        });
                    }
                    claimant_prev = utt.text.clone();
                }
            }
        }
    }
    out
}

pub fn train_negation_classifier(
    cases: &[GoldCase],
    cfg: &TrainConfig,
) -> Result<NegationClassifier> {
    train_negation_classifier_on(&negation_examples(cases), cfg)
}

pub fn train_negation_classifier_on(
    examples: &[NegationExample],
    cfg: &TrainConfig,
) -> Result<NegationClassifier> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("no negation examples".into()));
    }
    let tokens: Vec<String> = examples
        .iter()
        .flat_map(|e| [&e.assessor_prev, &e.claimant_prev, &e.current])
        .flat_map(|t| tokenize(t).tokens.into_iter().map(|t| t.surface))
        .collect();
    let vocab = Vocab::build(tokens.iter().map(String::as_str));
    let mut model = NegationClassifier::init(vocab, cfg)?;
    let encoded: Vec<(Vec<usize>, f64)> = examples
        .iter()
        .map(|e| {
            (
                model.window_ids(&e.assessor_prev, &e.claimant_prev, &e.current),
                if e.negative { 1.0 } else { 0.0 },
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::corpus::mix_seed(cfg.seed.wrapping_add(2)));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<usize>, f64)> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            model.backprop_batch(&batch)?;
            sgd_step(&mut model.params, cfg.learning_rate)?;
        }
    }
    Ok(model)
}
