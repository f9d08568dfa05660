//! Character-level corruption simulating speech-recognition errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOp {
    Substitute,
    Delete,
    Insert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub char_error_rate: f64,
    pub operations: Vec<NoiseOp>,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            char_error_rate: 0.05,
            operations: vec![NoiseOp::Substitute, NoiseOp::Delete, NoiseOp::Insert],
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn new(char_error_rate: f64, operations: &[NoiseOp], seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&char_error_rate) {
            return Err(Error::Invalid(format!(
                "char_error_rate {char_error_rate} outside [0, 1]"
            )));
        }
        let mut operations = operations.to_vec();
        operations.sort();
        operations.dedup();
        Ok(NoiseConfig {
            char_error_rate,
            operations,
            seed,
        })
    }

    /// No corruption at all.
    pub fn clean() -> Self {
        NoiseConfig {
            char_error_rate: 0.0,
            ..NoiseConfig::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        NoiseConfig {
            seed,
            ..self.clone()
        }
    }
}

const ALPHABET: &[u8; 26] = b"abcdefghijklmnopqrstuvwxyz";

/// Walks the text once; every character is hit with probability
/// `char_error_rate` by one operation drawn uniformly from the enabled set.
///
/// Draw order per character: one uniform `f64`; on a hit, one operation
/// index, then (substitute/insert only) one letter index.
pub fn corrupt_text(text: &str, noise: &NoiseConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = String::with_capacity(text.len() + 4);
    for c in text.chars() {
        let roll: f64 = rng.gen();
        if roll >= noise.char_error_rate || noise.operations.is_empty() {
            out.push(c);
            continue;
        }
        let op = noise.operations[rng.gen_range(0..noise.operations.len())];
        match op {
            NoiseOp::Substitute => {
                let mut letter = ALPHABET[rng.gen_range(0..ALPHABET.len())] as char;
                if letter == c.to_ascii_lowercase() {
                    letter = ALPHABET[(letter as u8 - b'a' + 1) as usize % 26] as char;
                }
                out.push(letter);
            }
            NoiseOp::Delete => {}
            NoiseOp::Insert => {
                out.push(c);
                out.push(ALPHABET[rng.gen_range(0..ALPHABET.len())] as char);
            }
        }
    }
    out
}
