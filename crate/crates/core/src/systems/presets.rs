//! Noise mixtures used by the benchmark experiments.

use super::gmm::GmmParams;

fn diag2(a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![vec![a, 0.0], vec![0.0, b]]
}

fn diag4(d: [f64; 4]) -> Vec<Vec<f64>> {
    (0..4)
        .map(|i| (0..4).map(|j| if i == j { d[i] } else { 0.0 }).collect())
        .collect()
}

/// Two modes at (−3,−3) and (3,3), weights 0.3 / 0.7.
pub fn pendulum_two_mode() -> GmmParams {
    GmmParams {
        weights: vec![0.3, 0.7],
        means: vec![vec![-3.0, -3.0], vec![3.0, 3.0]],
        covariances: vec![diag2(0.5, 0.5), diag2(0.5, 0.5)],
    }
}

pub fn pendulum_three_mode() -> GmmParams {
    GmmParams {
        weights: vec![0.6, 0.3, 0.1],
        means: vec![vec![-3.0, -3.0], vec![-5.0, 4.0], vec![4.0, 4.0]],
        covariances: vec![
            diag2(0.5, 0.5),
            vec![vec![1.0, 0.8], vec![0.8, 1.0]],
            vec![vec![0.6, -0.3], vec![-0.3, 0.5]],
        ],
    }
}

/// Two modes at (−5,−4) and (4,5), weights 0.3 / 0.7.
pub fn vdp_two_mode() -> GmmParams {
    GmmParams {
        weights: vec![0.3, 0.7],
        means: vec![vec![-5.0, -4.0], vec![4.0, 5.0]],
        covariances: vec![diag2(0.5, 0.5), diag2(0.5, 0.5)],
    }
}

pub fn tracking_four_mode() -> GmmParams {
    GmmParams {
        weights: vec![0.4, 0.3, 0.2, 0.1],
        means: vec![vec![-3.0, -3.0], vec![-5.0, 4.0], vec![2.0, -2.0], vec![4.0, 4.0]],
        covariances: vec![
            diag2(0.5, 0.5),
            vec![vec![1.0, 0.8], vec![0.8, 1.0]],
            vec![vec![0.6, -0.3], vec![-0.3, 0.5]],
            vec![vec![0.3, 0.1], vec![0.1, 0.4]],
        ],
    }
}

pub fn boeing_two_mode() -> GmmParams {
    GmmParams {
        weights: vec![0.3, 0.7],
        means: vec![vec![-5.0, -4.0, -3.0, -2.0], vec![4.0, 5.0, 3.0, 2.0]],
        covariances: vec![diag4([0.1, 0.2, 0.3, 0.4]), diag4([0.4, 0.1, 0.3, 0.2])],
    }
}

/// Looks up a named mixture.
pub fn by_name(name: &str) -> Option<GmmParams> {
    Some(match name {
        "pendulum2" => pendulum_two_mode(),
        "pendulum3" => pendulum_three_mode(),
        "vdp2" => vdp_two_mode(),
        "tracking4" => tracking_four_mode(),
        "boeing2" => boeing_two_mode(),
        _ => return None,
    })
}

pub const NAMES: [&str; 5] = ["pendulum2", "pendulum3", "vdp2", "tracking4", "boeing2"];
