use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gazetteer::Gazetteer;
use super::{
    decode_spans_scored, spans_to_labels, tokenize_utterance, BioLabel, TaggedSpan, TokenSequence,
};
use crate::corpus::dates::{normalize_numeric, weekday};
use crate::corpus::{EntityType, GoldCase, KbEntry, Utterance};
use crate::error::{Error, Result};
use crate::neural::{softmax, softmax_ce, ParameterStore, Section, TrainConfig};

/// Hashed feature space of the trainable tagger.
pub const FEATURE_BUCKETS: usize = 1 << 14;

const WEIGHTS: &str = "tagger.w";
const BIAS: &str = "tagger.b";

fn fnv(parts: &[&[u8]]) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % FEATURE_BUCKETS as u64) as usize
}

fn shape(token: &str) -> String {
    let mut out = String::new();
    for c in token.chars() {
        let s = if c.is_ascii_digit() {
            'd'
        } else if c.is_uppercase() {
            'A'
        } else if c.is_alphabetic() {
            'a'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
    }
    out
}

/// Per-token linear classifier over hashed window features.
#[derive(Clone, Debug)]
pub struct LinearTagger {
    pub params: ParameterStore,
    pub gazetteer: Gazetteer,
    pub warnings: Vec<String>,
}

impl LinearTagger {
    /// Feature ids of token `i`; they depend only on tokens `i-2..=i+2`.
    pub fn features(&self, toks: &TokenSequence, i: usize) -> Vec<usize> {
        let n = toks.len() as isize;
        let word = |j: isize| -> String {
            if j < 0 {
                "<s>".into()
            } else if j >= n {
                "</s>".into()
            } else {
                toks.tokens[j as usize].surface.to_lowercase()
            }
        };
        let i = i as isize;
        let mut f = Vec::with_capacity(40);
        f.push(fnv(&[b"bias"]));
        for o in -2isize..=2 {
            let w = word(i + o);
            f.push(fnv(&[b"w", &o.to_le_bytes(), w.as_bytes()]));
            if (i + o) >= 0 && (i + o) < n {
                let surface = &toks.tokens[(i + o) as usize].surface;
                for bit in 0..16u8 {
                    if self.gazetteer.token_flags(surface) & (1 << bit) != 0 {
                        f.push(fnv(&[b"g", &o.to_le_bytes(), &[bit]]));
                    }
                }
                if o.abs() <= 1 {
                    f.push(fnv(&[b"s", &o.to_le_bytes(), shape(surface).as_bytes()]));
                    if normalize_numeric(surface).is_some() {
                        f.push(fnv(&[b"dn", &o.to_le_bytes()]));
                    }
                    if weekday(surface).is_some() {
                        f.push(fnv(&[b"wd", &o.to_le_bytes()]));
                    }
                }
            }
        }
        let cur = word(i);
        let chars: Vec<char> = cur.chars().collect();
        let prefix: String = chars.iter().take(3).collect();
        let suffix: String = chars[chars.len().saturating_sub(3)..].iter().collect();
        f.push(fnv(&[b"p3", prefix.as_bytes()]));
        f.push(fnv(&[b"s3", suffix.as_bytes()]));
        f.push(fnv(&[b"bg", word(i - 1).as_bytes(), cur.as_bytes()]));
        f.push(fnv(&[b"bg+", cur.as_bytes(), word(i + 1).as_bytes()]));
        f
    }

    fn logits(&self, w: &[f64], b: &[f64], feats: &[usize]) -> Vec<f64> {
        (0..BioLabel::COUNT)
            .map(|k| {
                let row = &w[k * FEATURE_BUCKETS..(k + 1) * FEATURE_BUCKETS];
                b[k] + feats.iter().map(|&f| row[f]).sum::<f64>()
            })
            .collect()
    }

    /// Argmax label and its probability for every token, independently.
    pub fn tag_scored(&self, toks: &TokenSequence) -> Vec<(BioLabel, f64)> {
        let w = &self.params.get(WEIGHTS).expect("tagger weights").value;
        let b = &self.params.get(BIAS).expect("tagger bias").value;
        (0..toks.len())
            .map(|i| {
                let probs = softmax(&self.logits(w, b, &self.features(toks, i)));
                let (k, p) = probs
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::MIN),
                        |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc },
                    );
                (BioLabel::from_index(k).expect("label index"), p)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum TaggerModel {
    Gazetteer(Gazetteer),
    Trainable(LinearTagger),
}

impl TaggerModel {
    pub fn gazetteer(kb: &[KbEntry]) -> Self {
        TaggerModel::Gazetteer(Gazetteer::from_kb(kb))
    }

    pub fn tag_scored(&self, toks: &TokenSequence) -> Vec<(BioLabel, f64)> {
        match self {
            TaggerModel::Gazetteer(g) => g.tag(toks).into_iter().map(|l| (l, 1.0)).collect(),
            TaggerModel::Trainable(t) => t.tag_scored(toks),
        }
    }

    pub fn tag(&self, toks: &TokenSequence) -> Vec<BioLabel> {
        self.tag_scored(toks).into_iter().map(|(l, _)| l).collect()
    }

    /// Tokenize, tag and decode one utterance.
    pub fn extract(&self, utt: &Utterance) -> Vec<TaggedSpan> {
        let toks = tokenize_utterance(utt);
        let (labels, scores): (Vec<_>, Vec<_>) = self.tag_scored(&toks).into_iter().unzip();
        decode_spans_scored(&toks, &labels, &scores)
    }

    pub fn backend_name(&self) -> &'static str {
        match self {
            TaggerModel::Gazetteer(_) => "gazetteer",
            TaggerModel::Trainable(_) => "trainable",
        }
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("tagger");
        s.meta.insert("backend".into(), self.backend_name().into());
        if let TaggerModel::Trainable(t) = self {
            s.meta.insert("buckets".into(), FEATURE_BUCKETS.to_string());
            s.meta.insert("warnings".into(), t.warnings.join("; "));
            s.params = t.params.clone();
        }
        s
    }

    /// The gazetteer is rebuilt from the knowledge base stored alongside.
    pub fn from_section(section: &Section, kb: &[KbEntry]) -> Result<Self> {
        let gazetteer = Gazetteer::from_kb(kb);
        match section.meta("backend")? {
            "gazetteer" => Ok(TaggerModel::Gazetteer(gazetteer)),
            "trainable" => {
                let buckets: usize = section.meta_parse("buckets")?;
                if buckets != FEATURE_BUCKETS {
                    return Err(Error::VersionMismatch(format!(
                        "tagger has {buckets} feature buckets, this build uses {FEATURE_BUCKETS}"
                    )));
                }
                let w = section.params.get(WEIGHTS)?;
                if w.shape != [BioLabel::COUNT, FEATURE_BUCKETS] {
                    return Err(Error::Shape {
                        name: WEIGHTS.into(),
                        expected: vec![BioLabel::COUNT, FEATURE_BUCKETS],
                        found: w.shape.clone(),
                    });
                }
                section.params.get(BIAS)?;
                let warnings = section
                    .meta
                    .get("warnings")
                    .filter(|w| !w.is_empty())
                    .map(|w| w.split("; ").map(str::to_string).collect())
                    .unwrap_or_default();
                Ok(TaggerModel::Trainable(LinearTagger {
                    params: section.params.clone(),
                    gazetteer,
                    warnings,
                }))
            }
            other => Err(Error::Invalid(format!("unknown tagger backend `{other}`"))),
        }
    }
}

/// Trains the per-token classifier with mini-batch SGD on softmax
/// cross-entropy. Gradients are summed over the tokens of a batch and only
/// touched feature rows are updated.
pub fn train_tagger(cases: &[GoldCase], kb: &[KbEntry], cfg: &TrainConfig) -> Result<TaggerModel> {
    cfg.validate()?;
    let mut tagger = LinearTagger {
        params: ParameterStore::new(),
        gazetteer: Gazetteer::from_kb(kb),
        warnings: Vec::new(),
    };
    tagger.params.insert_values(
        WEIGHTS,
        &[BioLabel::COUNT, FEATURE_BUCKETS],
        vec![0.0; BioLabel::COUNT * FEATURE_BUCKETS],
    )?;
    tagger
        .params
        .insert_values(BIAS, &[BioLabel::COUNT], vec![0.0; BioLabel::COUNT])?;

    let seen: BTreeSet<EntityType> = cases
        .iter()
        .flat_map(|c| c.gold_spans.iter().map(|s| s.etype))
        .collect();
    for t in EntityType::ALL {
        if !seen.contains(&t) {
            let msg = format!("no training spans of type {t}");
            log::warn!("{msg}");
            tagger.warnings.push(msg);
        }
    }

    let mut examples: Vec<(Vec<usize>, usize)> = Vec::new();
    for case in cases {
        for utt in &case.dialogue.utterances {
            let toks = tokenize_utterance(utt);
            let labels = spans_to_labels(&toks, &case.gold_spans);
            for (i, label) in labels.iter().enumerate() {
                examples.push((tagger.features(&toks, i), label.index()));
            }
        }
    }
    if examples.is_empty() {
        return Err(Error::EmptyInput("no tokens to train the tagger on".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut acc: HashMap<usize, [f64; BioLabel::COUNT]> = HashMap::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            acc.clear();
            let mut bias_grad = [0.0; BioLabel::COUNT];
            {
                let w = &tagger.params.get(WEIGHTS)?.value;
                let b = &tagger.params.get(BIAS)?.value;
                for &e in batch {
                    let (feats, target) = &examples[e];
                    let ce = softmax_ce(&tagger.logits(w, b, feats), *target)?;
                    for &f in feats {
                        let slot = acc.entry(f).or_insert([0.0; BioLabel::COUNT]);
                        for k in 0..BioLabel::COUNT {
                            slot[k] += ce.grad[k];
                        }
                    }
                    for k in 0..BioLabel::COUNT {
                        bias_grad[k] += ce.grad[k];
                    }
                }
            }
            let lr = cfg.learning_rate;
            if bias_grad.iter().any(|g| g.is_nan()) {
                return Err(Error::NanGradient(BIAS.into()));
            }
            let w = &mut tagger.params.get_mut(WEIGHTS)?.value;
            for (&f, g) in &acc {
                for k in 0..BioLabel::COUNT {
                    w[k * FEATURE_BUCKETS + f] -= lr * g[k];
                }
            }
            let b = &mut tagger.params.get_mut(BIAS)?.value;
            for k in 0..BioLabel::COUNT {
                b[k] -= lr * bias_grad[k];
            }
        }
    }
    Ok(TaggerModel::Trainable(tagger))
}
