//! A small reverse-mode toolkit: parameter stores, a mean-pooling encoder,
//! losses, SGD, gradient reversal and finite-difference checking.
//!
//! Backward passes are written by hand per model; every one is covered by a
//! finite-difference test.

mod encoder;
pub mod format;
pub mod loss;
mod optim;
mod store;
pub mod vocab;

pub use encoder::{EncodedVector, EncoderRole, EncoderTrace, MeanPoolEncoder};
pub use format::{ModelFile, Section, MODEL_HEADER};
pub use loss::{bce_loss, bce_with_logit, sigmoid, softmax, softmax_ce, CrossEntropy};
pub use optim::{
    finite_diff_check, finite_diff_check_where, grad_reverse, sgd_step, sgd_step_where, TrainConfig,
};
pub use store::{Param, ParameterStore};
pub use vocab::Vocab;

/// `y = W x + b` for a `rows x cols` row-major `w`.
/// Glorot uniform bound for a `[rows, cols]` weight matrix.
pub fn xavier(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

pub fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + dot(&w[r * cols..(r + 1) * cols], x))
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accumulates the gradients of `y = W x + b` given `dy`, returning `dx`.
pub fn affine_backward(
    w: &Param,
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let cols = x.len();
    let mut dx = vec![0.0; cols];
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        let row = &w.value[r * cols..(r + 1) * cols];
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += g * x[c];
            dx[c] += g * row[c];
        }
    }
    dx
}
