//! Transmission resets, cost bookkeeping and evaluation aggregation.

use proptest::prelude::*;
use silence_lab::estimator::{Estimator, EstimatorNet, LinearEstimator};
use silence_lab::eval::{evaluate, mean_std, EvalReport, EvalSettings, SchedulePolicy, SeedResult};
use silence_lab::rng::{self, Purpose};
use silence_lab::rollout::{discounted_sum, simulate, CostSpec, Scheduler};
use silence_lab::scheduler::{PolicyNet, ValueNet};
use silence_lab::systems::{build_with_default_lqr, presets, GmmSpec, SystemKind};
use silence_lab::training::collect_rollout;

fn mixture_for(kind: SystemKind) -> GmmSpec<f64> {
    let params = match kind {
        SystemKind::Pendulum => presets::pendulum_two_mode(),
        SystemKind::Vdp => presets::vdp_two_mode(),
        SystemKind::Tracking => presets::tracking_four_mode(),
        SystemKind::Boeing747 => presets::boeing_two_mode(),
    };
    GmmSpec::from_params(&params).unwrap()
}

#[test]
fn transmission_resets_and_cost_duality_on_100_rollouts() {
    for k in 0..100u64 {
        let kind = SystemKind::ALL[(k % 4) as usize];
        let n = kind.state_dim();
        let gmm = mixture_for(kind);
        let model = build_with_default_lqr(kind, &gmm).unwrap();
        let policy = PolicyNet::<f64>::new(n, &[16, 16], k).unwrap();
        let value = ValueNet::<f64>::new(n, &[16, 16], 100.0, k).unwrap();
        let est = EstimatorNet::<f64>::new(n, &[16, 16], k + 500).unwrap();
        let lambda = [0.0, 1.0, 45.0, 1e3][(k / 4 % 4) as usize];
        let cost = CostSpec::identity(lambda, 0.99, n);
        let horizon = if kind == SystemKind::Vdp { 40 } else { 80 };
        let mut r = rng::stream(k, Purpose::Misc, 0);
        let (buf, rec) =
            collect_rollout(&policy, &value, Estimator::Learned(&est), &model, &gmm, &cost, horizon, 0.9, &mut r).unwrap();
        for t in 0..rec.len() {
            if rec.actions[t] {
                assert!(rec.errors[t].iter().all(|&e| e == 0.0), "{kind} rollout {k} step {t}");
                assert_eq!(rec.aoi[t], 0);
            }
        }
        let negated_return = -discounted_sum(&buf.rewards, cost.gamma);
        assert_eq!(negated_return, rec.lookahead_cost(&cost), "{kind} rollout {k}");
        assert_eq!(rec.discounted_cost, rec.lookahead_cost(&cost));
    }
}

#[test]
fn always_transmit_is_a_geometric_series() {
    for (lambda, gamma, horizon) in [(45.0, 0.99, 500usize), (3.0, 0.9, 37), (1e6, 0.5, 10)] {
        let gmm = mixture_for(SystemKind::Pendulum);
        let model = build_with_default_lqr(SystemKind::Pendulum, &gmm).unwrap();
        let lin = LinearEstimator::plain(2);
        let settings = EvalSettings { horizon, cost: CostSpec::identity(lambda, gamma, 2), seeds: vec![0, 1, 2] };
        let rep = evaluate(&SchedulePolicy::Always, Estimator::Linear(&lin), &model, &gmm, &settings).unwrap();
        let expected = lambda * (1.0 - f64::powi(gamma, horizon as i32)) / (1.0 - gamma);
        assert!((rep.mean_cost - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {expected}", rep.mean_cost);
        assert_eq!(rep.mean_error_cost, 0.0);
    }
}

#[test]
fn evaluation_cost_equals_negated_training_return() {
    let gmm = mixture_for(SystemKind::Pendulum);
    let model = build_with_default_lqr(SystemKind::Pendulum, &gmm).unwrap();
    let policy = PolicyNet::<f64>::new(2, &[16], 4).unwrap();
    let value = ValueNet::<f64>::new(2, &[16], 100.0, 4).unwrap();
    let est = EstimatorNet::<f64>::new(2, &[16], 5).unwrap();
    let settings = EvalSettings { horizon: 200, cost: CostSpec::identity(45.0, 0.99, 2), seeds: (0..6).collect() };
    let rep = evaluate(&SchedulePolicy::Learned(policy.clone()), Estimator::Learned(&est), &model, &gmm, &settings).unwrap();
    for s in &rep.per_seed {
        let mut r = rng::stream(s.seed, Purpose::Evaluation, 0);
        let (buf, _) =
            collect_rollout(&policy, &value, Estimator::Learned(&est), &model, &gmm, &settings.cost, 200, 0.9, &mut r).unwrap();
        assert_eq!(s.cost, -discounted_sum(&buf.rewards, 0.99));
    }
}

#[test]
fn fixed_initial_state_is_respected() {
    let gmm = mixture_for(SystemKind::Tracking);
    let model = build_with_default_lqr(SystemKind::Tracking, &gmm).unwrap();
    let lin = LinearEstimator::plain(2);
    let mut r = rng::seeded(1);
    let cost = CostSpec::identity(1.0, 0.9, 2);
    let rec = simulate(&model, &gmm, &SchedulePolicy::Never, Estimator::Linear(&lin), &cost, 5, Some(&[0.5, -0.25]), &mut r)
        .unwrap();
    assert_eq!(rec.states[0], vec![0.5, -0.25]);
    assert_eq!(rec.errors[0], vec![0.5, -0.25]);
    assert_eq!(rec.aoi, vec![0, 1, 2, 3, 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn event_trigger_is_a_pure_threshold_rule(e in prop::collection::vec(-10.0f64..10.0, 2..=4), tau in 0.0f64..100.0, t in 0u64..1000, seed in 0u64..100) {
        let rule = SchedulePolicy::EventTriggered(tau);
        let sq: f64 = e.iter().map(|v| v * v).sum();
        let mut r1 = rng::seeded(seed);
        let mut r2 = rng::seeded(seed + 1);
        let (a, _) = rule.decide(&e, t, &mut r1).unwrap();
        let (b, _) = rule.decide(&e, t + 7, &mut r2).unwrap();
        prop_assert_eq!(a, sq >= tau);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn report_mean_is_arithmetic_mean(costs in prop::collection::vec(0.0f64..1e5, 1..40)) {
        let per_seed: Vec<SeedResult> = costs
            .iter()
            .enumerate()
            .map(|(i, &c)| SeedResult { seed: i as u64, cost: c, error_cost: c / 2.0, transmissions: i })
            .collect();
        let rep = EvalReport::from_seeds(10, per_seed);
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        prop_assert!((rep.mean_cost - mean).abs() <= 1e-12 * mean.max(1.0));
        prop_assert_eq!(rep.std_cost, mean_std(&costs).1);
    }
}
