use serde::{Deserialize, Serialize};

use super::store::ParameterStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adversarial_lambda: f64,
    pub seed: u64,
    /// Encoder output size.
    pub dim: usize,
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            adversarial_lambda: 1.0,
            seed: 42,
            dim: 32,
            embed_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.dim == 0 || self.embed_dim == 0 {
            return Err(Error::Invalid(
                "batch size and dimensions must be positive".into(),
            ));
        }
        if !(self.adversarial_lambda >= 0.0 && self.adversarial_lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "adversarial lambda {} must be non-negative",
                self.adversarial_lambda
            )));
        }
        Ok(())
    }
}

/// Identity on the forward pass; on the backward pass the incoming gradient
/// is scaled by `-lambda`.
pub fn grad_reverse(grad: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert!(lambda >= 0.0, "lambda must be non-negative");
    grad.iter().map(|g| -lambda * g).collect()
}

/// `theta <- theta - lr * grad` on every parameter, then clears gradients.
pub fn sgd_step(store: &mut ParameterStore, lr: f64) -> Result<()> {
    sgd_step_where(store, lr, |_| true)
}

/// Updates only the parameters selected by `select`; all gradients are
/// cleared afterwards. Nothing is updated if any selected gradient is NaN.
pub fn sgd_step_where(
    store: &mut ParameterStore,
    lr: f64,
    select: impl Fn(&str) -> bool,
) -> Result<()> {
    for (name, p) in store.iter() {
        if select(name) && p.grad.iter().any(|g| g.is_nan()) {
            return Err(Error::NanGradient(name.to_string()));
        }
    }
    for (name, p) in store.iter_mut() {
        if select(name) {
            for (v, g) in p.value.iter_mut().zip(&p.grad) {
                *v -= lr * g;
            }
        }
        p.grad.iter_mut().for_each(|g| *g = 0.0);
    }
    Ok(())
}

/// Maximum relative error `|a - n| / max(1e-8, |a| + |n|)` between the
/// gradients stored in `store` and central differences of `loss`.
pub fn finite_diff_check<F>(loss: F, store: &ParameterStore, h: f64) -> Result<f64>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    finite_diff_check_where(loss, store, h, |_| true)
}

/// As [`finite_diff_check`], restricted to the parameters selected by `select`.
pub fn finite_diff_check_where<F>(
    loss: F,
    store: &ParameterStore,
    h: f64,
    select: impl Fn(&str) -> bool,
) -> Result<f64>
where
    F: Fn(&ParameterStore) -> Result<f64>,
{
    let mut probe = store.clone();
    let names: Vec<String> = store
        .names()
        .filter(|n| select(n))
        .map(str::to_string)
        .collect();
    let mut worst = 0.0f64;
    for name in names {
        let len = store.get(&name)?.len();
        for i in 0..len {
            let analytic = store.get(&name)?.grad[i];
            let original = probe.get(&name)?.value[i];
            probe.get_mut(&name)?.value[i] = original + h;
            let up = loss(&probe)?;
            probe.get_mut(&name)?.value[i] = original - h;
            let down = loss(&probe)?;
            probe.get_mut(&name)?.value[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
