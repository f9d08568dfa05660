mod common;

use claimlens_core::filtering::{AdvTerm, QidMode};
use common::*;

#[test]
fn bce_head_gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = task_gradient_error(QidMode::Single, seed).unwrap();
        assert!(err <= 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn mtl_composite_gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = task_gradient_error(QidMode::Mtl, seed).unwrap();
        assert!(err <= 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn adversarial_gradients_match_finite_differences() {
    for seed in 0..20 {
        for lambda in [0.0, 0.5, 1.0] {
            let err = adversarial_gradient_error(seed, lambda).unwrap();
            assert!(err <= 1e-3, "seed {seed} lambda {lambda}: {err}");
        }
    }
}

#[test]
fn reversal_scales_the_discriminator_gradient() {
    for seed in 0..20 {
        for lambda in [0.0, 0.3, 1.0, 2.5] {
            let gap = adversarial_identity_gap(seed, lambda).unwrap();
            assert!(gap <= 1e-6, "seed {seed} lambda {lambda}: {gap}");
        }
    }
}

#[test]
fn adversarial_term_touches_only_shared_and_discriminator() {
    use claimlens_core::filtering::question::{is_discriminator, is_shared};
    let (mut model, batch) = random_instance(QidMode::AdvMtl, 3).unwrap();
    model
        .backprop_batch(&batch, false, AdvTerm::Reversed(1.0))
        .unwrap();
    for (name, p) in model.params.iter() {
        if !is_shared(name) && !is_discriminator(name) {
            assert!(p.grad.iter().all(|g| *g == 0.0), "{name}");
        }
    }
}
