//! Gradient self-tests: finite-difference checks of every training loss and
//! the analytic gradient-reversal identity, on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::KbEntry;
use crate::error::Result;
use crate::filtering::question::{is_discriminator, is_shared};
use crate::filtering::{AdvTerm, QidMode, QuestionClassifier};
use crate::linking::KbIndex;
use crate::neural::{finite_diff_check_where, ParameterStore, TrainConfig, Vocab};

pub const FD_STEP: f64 = 1e-4;

pub type Batch = Vec<(Vec<usize>, usize, f64)>;

/// Small classifier with every weight, bias included, drawn at random, and
/// a random batch over its vocabulary.
pub fn random_instance(mode: QidMode, seed: u64) -> Result<(QuestionClassifier, Batch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics: Vec<String> = (0..3).map(|k| format!("t{k}")).collect();
    let words: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::build(words.iter().map(String::as_str));
    let cfg = TrainConfig {
        dim: 4,
        embed_dim: 3,
        seed,
        ..TrainConfig::default()
    };
    let mut model = QuestionClassifier::init(mode, topics, vocab, &cfg)?;
    for (_, p) in model.params.iter_mut() {
        p.value
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.8..0.8));
    }
    let v = model.vocab.len();
    let batch = (0..4)
        .map(|_| {
            let len = rng.gen_range(1..5);
            let ids = (0..len).map(|_| rng.gen_range(0..v)).collect();
            (ids, rng.gen_range(0..3), f64::from(rng.gen_range(0..2u8)))
        })
        .collect();
    Ok((model, batch))
}

fn task_loss<'a>(
    model: &'a QuestionClassifier,
    batch: &Batch,
) -> impl Fn(&ParameterStore) -> Result<f64> + 'a {
    let batch = batch.clone();
    move |s| Ok(model.losses(s, &batch)?.0)
}

/// Worst relative finite-difference error of the task-only gradient.
pub fn task_gradient_error(mode: QidMode, seed: u64) -> Result<f64> {
    let (mut model, batch) = random_instance(mode, seed)?;
    model.backprop_batch(&batch, true, AdvTerm::None)?;
    let frozen = model.clone();
    finite_diff_check_where(task_loss(&frozen, &batch), &model.params, FD_STEP, |n| {
        !is_discriminator(n)
    })
}

/// Worst relative error of the full adversarial step gradient: the shared
/// encoder against `L_task - lambda * L_adv`, the discriminator against
/// `L_adv`, every other parameter against `L_task`.
pub fn adversarial_gradient_error(seed: u64, lambda: f64) -> Result<f64> {
    let (mut model, batch) = random_instance(QidMode::AdvMtl, seed)?;
    model.backprop_batch(&batch, true, AdvTerm::Reversed(lambda))?;
    let m = model.clone();
    let b = batch.clone();
    let shared = finite_diff_check_where(
        |s| {
            let (t, a) = m.losses(s, &b)?;
            Ok(t - lambda * a)
        },
        &model.params,
        FD_STEP,
        is_shared,
    )?;
    let disc = finite_diff_check_where(
        |s| Ok(m.losses(s, &b)?.1),
        &model.params,
        FD_STEP,
        is_discriminator,
    )?;
    let rest = finite_diff_check_where(task_loss(&m, &batch), &model.params, FD_STEP, |n| {
        !is_shared(n) && !is_discriminator(n)
    })?;
    Ok(shared.max(disc).max(rest))
}

/// Largest coordinate-wise gap between the reversed adversarial gradient on
/// the shared encoder and `-lambda` times the plain discriminator gradient.
pub fn adversarial_identity_gap(seed: u64, lambda: f64) -> Result<f64> {
    let (mut reversed, batch) = random_instance(QidMode::AdvMtl, seed)?;
    let mut plain = reversed.clone();
    reversed.backprop_batch(&batch, false, AdvTerm::Reversed(lambda))?;
    plain.backprop_batch(&batch, false, AdvTerm::Plain)?;
    let mut worst = 0.0f64;
    for (name, p) in reversed.params.iter().filter(|(n, _)| is_shared(n)) {
        let q = plain.params.get(name)?;
        for (r, g) in p.grad.iter().zip(&q.grad) {
            worst = worst.max((r - (-lambda * g)).abs());
        }
    }
    Ok(worst)
}

pub const GRADIENT_TOLERANCE: f64 = 1e-3;
pub const IDENTITY_TOLERANCE: f64 = 1e-6;

/// Worst error of one check over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn worst_over(seeds: u64, f: impl Fn(u64) -> Result<f64>) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        worst = worst.max(f(seed)?);
    }
    Ok(worst)
}

/// The binary head, the multi-task loss and the adversarial loss against
/// finite differences, then the reversal identity, over `seeds` instances.
pub fn gradient_suite(seeds: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        CheckOutcome {
            name: "bce head",
            worst: worst_over(seeds, |s| task_gradient_error(QidMode::Single, s))?,
            tolerance: GRADIENT_TOLERANCE,
        },
        CheckOutcome {
            name: "multi-task loss",
            worst: worst_over(seeds, |s| task_gradient_error(QidMode::Mtl, s))?,
            tolerance: GRADIENT_TOLERANCE,
        },
        CheckOutcome {
            name: "adversarial loss",
            worst: worst_over(seeds, |s| adversarial_gradient_error(s, 1.0))?,
            tolerance: GRADIENT_TOLERANCE,
        },
        CheckOutcome {
            name: "reversal identity",
            worst: worst_over(seeds, |s| adversarial_identity_gap(s, 1.0))?,
            tolerance: IDENTITY_TOLERANCE,
        },
    ])
}

/// Every string one deletion, substitution or insertion away from `name`,
/// with substitutions and insertions drawn from `alphabet`.
pub fn single_edits(name: &str, alphabet: &[char]) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut out = Vec::new();
    for i in 0..=chars.len() {
        for &c in alphabet {
            let mut v = chars.clone();
            v.insert(i, c);
            out.push(v.into_iter().collect());
        }
        if i < chars.len() {
            let mut v = chars.clone();
            v.remove(i);
            out.push(v.into_iter().collect());
            for &c in alphabet.iter().filter(|&&c| c != chars[i]) {
                let mut v = chars.clone();
                v[i] = c;
                out.push(v.into_iter().collect());
            }
        }
    }
    out
}

/// Single-edit corruptions of knowledge-base names of at least four
/// characters that fail to link back to their entry, as `(entry id, text)`.
pub fn single_edit_failures(kb: &[KbEntry], tau: f64) -> Vec<(String, String)> {
    let alphabet: Vec<char> = ('a'..='z').chain([' ']).collect();
    let index = KbIndex::build(kb);
    let mut failures = Vec::new();
    for entry in kb {
        for name in entry.names().filter(|n| n.chars().count() >= 4) {
            for corrupted in single_edits(name, &alphabet) {
                let r = index.link(entry.etype, &corrupted, tau);
                if r.entry_id.as_deref() != Some(entry.id.as_str()) {
                    failures.push((entry.id.clone(), corrupted));
                }
            }
        }
    }
    failures
}
