//! Finite-difference helpers shared by the gradient tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silence_lab::nn::{Gradients, Mlp};
use silence_lab::scheduler::{PolicyNet, SurrogateBatch};

pub const H: f64 = 1e-6;

pub fn flatten(g: &Gradients<f64>) -> Vec<f64> {
    g.weights.iter().chain(&g.biases).flatten().copied().collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Central differences of `f` over every weight and bias, in `flatten` order.
pub fn fd_params(net: &Mlp<f64>, f: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    let mut out = Vec::new();
    let count = |p: &Mlp<f64>| p.layers().iter().map(|l| l.weights.len()).collect::<Vec<_>>();
    for (li, len) in count(net).into_iter().enumerate() {
        for k in 0..len {
            let orig = probe.layers()[li].weights[k];
            probe.layers_mut()[li].weights[k] = orig + H;
            let up = f(&probe);
            probe.layers_mut()[li].weights[k] = orig - H;
            let down = f(&probe);
            probe.layers_mut()[li].weights[k] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    for li in 0..net.layers().len() {
        for k in 0..net.layers()[li].bias.len() {
            let orig = probe.layers()[li].bias[k];
            probe.layers_mut()[li].bias[k] = orig + H;
            let up = f(&probe);
            probe.layers_mut()[li].bias[k] = orig - H;
            let down = f(&probe);
            probe.layers_mut()[li].bias[k] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    out
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Worst relative error of `upstream · net(x)` gradients (parameters and
/// input) over 100 random draws.
pub fn architecture_error(sizes: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let net = Mlp::<f64>::new(sizes, seed * 1000 + trial).unwrap();
        let x = random_vec(&mut rng, sizes[0], 3.0);
        let up = random_vec(&mut rng, *sizes.last().unwrap(), 1.0);
        let scalar = |m: &Mlp<f64>, x: &[f64]| m.forward(x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let g = net.backward(&x, &up).unwrap();
        let numeric = fd_params(&net, |m| scalar(m, &x));
        worst = worst.max(rel_err(&flatten(&g), &numeric));

        let input_fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += H;
                b[i] -= H;
                (scalar(&net, &a) - scalar(&net, &b)) / (2.0 * H)
            })
            .collect();
        worst = worst.max(rel_err(g.input.as_ref().unwrap(), &input_fd));
    }
    worst
}

/// Eight samples with old log-probabilities from a nearby policy so ratios differ from one.
pub fn fixed_batch() -> SurrogateBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let old = PolicyNet::<f64>::new(2, &[16, 16], 123).unwrap();
    let mut batch = SurrogateBatch { errors: vec![], actions: vec![], old_log_probs: vec![], advantages: vec![] };
    for t in 0..8 {
        let e = random_vec(&mut rng, 2, 4.0);
        let a = t % 3 != 0;
        batch.old_log_probs.push(old.log_prob(&e, a).unwrap() + rng.gen_range(-0.15..0.15));
        batch.errors.push(e);
        batch.actions.push(a);
        batch.advantages.push(rng.gen_range(-2.0..2.0));
    }
    batch
}

/// Relative error of the clipped-surrogate gradient on the fixed eight-step batch.
pub fn surrogate_error() -> f64 {
    let mut policy = PolicyNet::<f64>::new(2, &[16, 16], 5).unwrap();
    policy.net.scale_output_layer(30.0);
    let batch = fixed_batch();
    let (obj, _, g) = batch.gradient(&policy, 0.2, 0.01);
    assert!((obj - batch.objective(&policy, 0.2, 0.01)).abs() < 1e-12);
    let numeric = fd_params(&policy.net, |m| batch.objective(&PolicyNet { net: m.clone() }, 0.2, 0.01));
    rel_err(&flatten(&g), &numeric)
}
