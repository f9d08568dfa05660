use rand::Rng;

use super::store::ParameterStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderRole {
    Shared,
    Private,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedVector {
    pub values: Vec<f64>,
    pub role: EncoderRole,
}

/// Embedding lookup, mean pooling, then a tanh projection.
///
/// Parameters are `{prefix}.emb` (vocab x embed), `{prefix}.w`
/// (dim x embed) and `{prefix}.b` (dim).
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPoolEncoder {
    pub prefix: String,
    pub role: EncoderRole,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dim: usize,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub ids: Vec<usize>,
    pub mean: Vec<f64>,
    pub out: Vec<f64>,
}

impl MeanPoolEncoder {
    pub fn new(
        prefix: impl Into<String>,
        role: EncoderRole,
        vocab_size: usize,
        embed_dim: usize,
        dim: usize,
    ) -> Self {
        MeanPoolEncoder {
            prefix: prefix.into(),
            role,
            vocab_size,
            embed_dim,
            dim,
        }
    }

    pub fn emb_name(&self) -> String {
        format!("{}.emb", self.prefix)
    }

    pub fn w_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn b_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        store.insert_uniform(
            self.emb_name(),
            &[self.vocab_size, self.embed_dim],
            1.0,
            rng,
        )?;
        let scale = super::xavier(self.dim, self.embed_dim);
        store.insert_uniform(self.w_name(), &[self.dim, self.embed_dim], scale, rng)?;
        store.insert_values(self.b_name(), &[self.dim], vec![0.0; self.dim])
    }

    /// Out-of-range ids fall back to id 0.
    pub fn forward(&self, store: &ParameterStore, ids: &[usize]) -> Result<EncoderTrace> {
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        let emb = store.get(&self.emb_name())?;
        let w = store.get(&self.w_name())?;
        let b = store.get(&self.b_name())?;
        let e = self.embed_dim;
        let ids: Vec<usize> = ids
            .iter()
            .map(|&i| if i < self.vocab_size { i } else { 0 })
            .collect();
        let mut mean = vec![0.0; e];
        for &id in &ids {
            let row = &emb.value[id * e..(id + 1) * e];
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = ids.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let out = (0..self.dim)
            .map(|r| {
                let row = &w.value[r * e..(r + 1) * e];
                let pre: f64 = row.iter().zip(&mean).map(|(a, x)| a * x).sum::<f64>() + b.value[r];
                pre.tanh()
            })
            .collect();
        Ok(EncoderTrace { ids, mean, out })
    }

    pub fn encode(&self, store: &ParameterStore, ids: &[usize]) -> Result<EncodedVector> {
        Ok(EncodedVector {
            values: self.forward(store, ids)?.out,
            role: self.role,
        })
    }

    /// Accumulates parameter gradients given `d_out = dL/d(out)`.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        trace: &EncoderTrace,
        d_out: &[f64],
    ) -> Result<()> {
        let e = self.embed_dim;
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(&trace.out)
            .map(|(g, o)| g * (1.0 - o * o))
            .collect();
        let mut d_mean = vec![0.0; e];
        {
            let w = store.get_mut(&self.w_name())?;
            for (r, &dp) in d_pre.iter().enumerate() {
                if dp == 0.0 {
                    continue;
                }
                let base = r * e;
                for c in 0..e {
                    w.grad[base + c] += dp * trace.mean[c];
                    d_mean[c] += dp * w.value[base + c];
                }
            }
        }
        {
            let b = store.get_mut(&self.b_name())?;
            for (g, dp) in b.grad.iter_mut().zip(&d_pre) {
                *g += dp;
            }
        }
        let emb = store.get_mut(&self.emb_name())?;
        let n = trace.ids.len() as f64;
        for &id in &trace.ids {
            let row = &mut emb.grad[id * e..(id + 1) * e];
            for (g, dm) in row.iter_mut().zip(&d_mean) {
                *g += dm / n;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (MeanPoolEncoder, ParameterStore) {
        let enc = MeanPoolEncoder::new("e", EncoderRole::Shared, 6, 3, 4);
        let mut store = ParameterStore::new();
        enc.init(&mut store, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        (enc, store)
    }

    #[test]
    fn output_has_configured_dim_and_is_bounded() {
        let (enc, store) = setup();
        let v = enc.encode(&store, &[1, 2, 3]).unwrap();
        assert_eq!(v.values.len(), 4);
        assert!(v.values.iter().all(|x| x.abs() < 1.0));
        assert_eq!(v.role, EncoderRole::Shared);
    }

    #[test]
    fn empty_sequence_errors() {
        let (enc, store) = setup();
        assert!(matches!(
            enc.forward(&store, &[]),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn token_order_does_not_matter() {
        let (enc, store) = setup();
        let a = enc.encode(&store, &[1, 4, 2]).unwrap();
        let b = enc.encode(&store, &[2, 1, 4]).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_ids_map_to_zero() {
        let (enc, store) = setup();
        let a = enc.encode(&store, &[99]).unwrap();
        let b = enc.encode(&store, &[0]).unwrap();
        assert_eq!(a, b);
    }
}
