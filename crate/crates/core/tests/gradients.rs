//! Analytic gradients against central finite differences.

mod common;

use common::{architecture_error, fd_params, fixed_batch, flatten, rel_err, surrogate_error};
use silence_lab::nn::Mlp;
use silence_lab::scheduler::PolicyNet;

fn check_architecture(sizes: &[usize], seed: u64) {
    let worst = architecture_error(sizes, seed);
    assert!(worst < 1e-4, "{sizes:?}: worst relative error {worst:e}");
}

#[test]
fn policy_architectures() {
    check_architecture(&[2, 64, 64, 2], 1);
    check_architecture(&[4, 64, 64, 2], 2);
}

#[test]
fn value_architectures() {
    check_architecture(&[2, 64, 64, 1], 3);
    check_architecture(&[4, 64, 64, 1], 4);
}

#[test]
fn estimator_architectures() {
    check_architecture(&[3, 64, 64, 2], 5);
    check_architecture(&[5, 64, 64, 4], 6);
}

#[test]
fn f32_backward_agrees_with_f64() {
    let net64 = Mlp::<f64>::new(&[2, 16, 16, 2], 9).unwrap();
    let layers = net64
        .layers()
        .iter()
        .map(|l| silence_lab::nn::Dense {
            inputs: l.inputs,
            outputs: l.outputs,
            weights: l.weights.iter().map(|&v| v as f32).collect(),
            bias: l.bias.iter().map(|&v| v as f32).collect(),
        })
        .collect();
    let net32 = Mlp::<f32>::from_layers(layers).unwrap();
    let g64 = net64.backward(&[0.3, -1.2], &[1.0, -0.5]).unwrap();
    let g32 = net32.backward(&[0.3, -1.2], &[1.0, -0.5]).unwrap();
    let a = flatten(&g64);
    let b: Vec<f64> = g32.weights.iter().chain(&g32.biases).flatten().map(|&v| v as f64).collect();
    assert!(rel_err(&a, &b) < 1e-5);
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let err = surrogate_error();
    assert!(err < 1e-3, "relative error {err:e}");
}

#[test]
fn ratio_one_surrogate_is_mean_advantage_and_vanilla_gradient() {
    let policy = PolicyNet::<f64>::new(2, &[16, 16], 8).unwrap();
    let mut batch = fixed_batch();
    for i in 0..batch.len() {
        batch.old_log_probs[i] = policy.log_prob(&batch.errors[i], batch.actions[i]).unwrap();
    }
    let mean_adv = batch.advantages.iter().sum::<f64>() / 8.0;
    let (obj, _, g) = batch.gradient(&policy, 0.2, 0.0);
    assert!((obj - mean_adv).abs() < 1e-12);

    // ∇ mean(A · log π(a|e)), differentiated numerically
    let pg = |m: &Mlp<f64>| {
        let p = PolicyNet { net: m.clone() };
        (0..8)
            .map(|i| batch.advantages[i] * p.log_prob(&batch.errors[i], batch.actions[i]).unwrap())
            .sum::<f64>()
            / 8.0
    };
    let numeric = fd_params(&policy.net, pg);
    assert!(rel_err(&flatten(&g), &numeric) < 1e-5);
}
