use silence_lab::estimator::{train_estimator, Estimator};
use silence_lab::rng::Purpose;
use silence_lab::training::{alternating_train, init_networks, Problem, SchedulerLearner};
use silence_lab::TrainConfig;

fn small(lambda: f64) -> TrainConfig {
    TrainConfig {
        horizon: 20,
        outer_iterations: 2,
        ppo_epochs: 3,
        estimator_epochs: 3,
        rollouts_per_epoch: 4,
        estimator_rollouts: 4,
        baseline_epochs: 3,
        hidden: vec![16, 16],
        ..TrainConfig::pendulum(lambda)
    }
}

#[test]
fn value_fit_improves_over_80_epochs() {
    let cfg = small(45.0);
    let p = Problem::<f64>::from_config(&cfg).unwrap();
    let (policy, value, est) = init_networks::<f64>(&cfg).unwrap();
    let mut learner = SchedulerLearner::new(policy, value, cfg.ppo_config());
    let mut first = Vec::new();
    for epoch in 0..80 {
        let ep = learner
            .epoch(Estimator::Learned(&est), &p.model, &p.gmm, &p.cost, 20, 0.9, 8, 3, Purpose::Misc, epoch * 8)
            .unwrap();
        first.push(ep.stats.value_loss_first);
        assert!(ep.stats.value_loss_last <= ep.stats.value_loss_first * 1.5);
    }
    let early = first[..5].iter().sum::<f64>() / 5.0;
    let late = first[75..].iter().sum::<f64>() / 5.0;
    assert!(late < 0.5 * early, "value MSE {early} → {late}");
}

#[test]
fn phases_only_touch_their_own_networks() {
    let cfg = small(45.0);
    let p = Problem::<f64>::from_config(&cfg).unwrap();
    let (policy, value, est) = init_networks::<f64>(&cfg).unwrap();
    let est_before = est.clone();
    let mut learner = SchedulerLearner::new(policy.clone(), value, cfg.ppo_config());
    learner
        .epoch(Estimator::Learned(&est), &p.model, &p.gmm, &p.cost, 20, 0.9, 4, 0, Purpose::Misc, 0)
        .unwrap();
    assert_eq!(est, est_before);
    assert_ne!(learner.policy, policy);

    let policy_before = learner.policy.clone();
    let (trained, _) = train_estimator(&est, &learner.policy, &p.model, &p.gmm, &cfg.estimator_config()).unwrap();
    assert_eq!(learner.policy, policy_before);
    assert_ne!(trained, est);
}

#[test]
fn alternating_training_is_reproducible() {
    let a = alternating_train::<f64>(&small(10.0)).unwrap();
    let b = alternating_train::<f64>(&small(10.0)).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.value, b.value);
    assert_eq!(a.estimator, b.estimator);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.iterations.len(), 2);
    assert_eq!(a.log.rows.len(), 2 * (3 + 3));

    let c = alternating_train::<f64>(&TrainConfig { seed: 1, ..small(10.0) }).unwrap();
    assert_ne!(a.policy, c.policy);
}

#[test]
fn training_runs_in_f32() {
    let out = alternating_train::<f32>(&small(10.0)).unwrap();
    assert!(out.policy.net.is_finite() && out.estimator.net.is_finite());
}
