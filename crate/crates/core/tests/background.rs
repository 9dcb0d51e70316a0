use std::sync::Arc;

mod common;

use common::brute_force_gae;
use mbrl::background::{
    collect_rollouts, collect_virtual_rollouts, gae_advantages, me_ppo_train_iteration, MeConfig, MePpoAgent,
    PpoConfig, PpoLearner, TrajectoryBatch,
};
use mbrl::env::{make_task, Environment, LinearGaussian, LinearGaussianParams, RealEnv, Task, TaskConfig};
use mbrl::model::{AnalyticTransition, EnsembleConfig, EnvironmentModel};
use mbrl::nn::Matrix;
use mbrl::rng::seeded;
use mbrl::training::TrainConfig;
use proptest::prelude::*;

proptest! {
    #[test]
    fn gae_matches_double_sum(
        data in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, prop::bool::weighted(0.2)), 1..60),
        boot in -5.0f64..5.0,
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let r: Vec<f64> = data.iter().map(|d| d.0).collect();
        let v: Vec<f64> = data.iter().map(|d| d.1).collect();
        let t: Vec<bool> = data.iter().map(|d| d.2).collect();
        let (adv, ret) = gae_advantages(&r, &v, boot, &t, gamma, lambda);
        let brute = brute_force_gae(&r, &v, boot, &t, gamma, lambda);
        for i in 0..r.len() {
            prop_assert!((adv[i] - brute[i]).abs() < 1e-10);
            prop_assert!((ret[i] - adv[i] - v[i]).abs() < 1e-12);
        }
    }
}

fn noiseless_lg() -> Arc<dyn Task> {
    Arc::new(
        LinearGaussian::new(LinearGaussianParams {
            noise_std: 0.0,
            ..Default::default()
        })
        .unwrap(),
    )
}

fn learner(obs: usize, act: usize, log_std: f64) -> PpoLearner {
    let cfg = PpoConfig {
        hidden: vec![16],
        init_log_std: log_std,
        epochs: 3,
        minibatch: 16,
        ..Default::default()
    };
    PpoLearner::new(obs, act, cfg, &mut seeded(0)).unwrap()
}

#[test]
fn virtual_rollouts_deterministic_and_segmented() {
    let task = noiseless_lg();
    let mut model = EnvironmentModel::for_task(&task, AnalyticTransition::new(task.clone()));
    model.add_initial_state(vec![0.0, 0.0]).unwrap();
    let l = learner(2, 2, -5.0);
    let a = collect_virtual_rollouts(&l.policy, &l.value, &model, 30, 7, &mut seeded(4)).unwrap();
    let b = collect_virtual_rollouts(&l.policy, &l.value, &model, 30, 7, &mut seeded(4)).unwrap();
    assert_eq!(a, b);

    let one = collect_virtual_rollouts(&l.policy, &l.value, &model, 12, 1, &mut seeded(1)).unwrap();
    assert!(one.boundaries.iter().all(|&x| x));

    let ten = collect_virtual_rollouts(&l.policy, &l.value, &model, 10, 4, &mut seeded(1)).unwrap();
    assert_eq!(ten.len(), 10);
    let segments = 1 + ten.boundaries[..9].iter().filter(|&&x| x).count();
    assert!(segments >= 3);
    assert_eq!(ten.log_probs.len(), 10);
    assert_eq!(ten.values.len(), 10);
}

#[test]
fn virtual_rollouts_need_initial_states() {
    let task = noiseless_lg();
    let model = EnvironmentModel::for_task(&task, AnalyticTransition::new(task.clone()));
    let l = learner(2, 2, 0.0);
    assert!(collect_virtual_rollouts(&l.policy, &l.value, &model, 5, 5, &mut seeded(0)).is_err());
}

fn real_batch(n: usize) -> (PpoLearner, TrajectoryBatch) {
    let task = make_task(&TaskConfig::named("pendulum")).unwrap();
    let mut env = RealEnv::new(task, 3);
    let l = learner(3, 1, 0.0);
    let b = collect_rollouts(&l.policy, &l.value, &mut env, n, 50, &mut seeded(2)).unwrap();
    (l, b)
}

#[test]
fn first_minibatch_ratio_is_one_and_advantages_normalized() {
    let (mut l, mut b) = real_batch(128);
    let d = l.update(&mut b, &mut seeded(0)).unwrap();
    assert!(d.first_ratio_deviation < 1e-12, "{}", d.first_ratio_deviation);
    assert!(d.advantage_mean.abs() < 1e-10);
    assert!((d.advantage_std - 1.0).abs() < 1e-6);
    assert!(d.approx_kl.is_finite() && d.mean_ratio.is_finite());
    assert!((0.0..=1.0).contains(&d.clip_fraction));
}

#[test]
fn entropy_does_not_grow_without_bonus() {
    let (mut l, mut b) = real_batch(256);
    let start = l.policy.entropy();
    let mut last = start;
    for _ in 0..20 {
        let d = l.update(&mut b, &mut seeded(0)).unwrap();
        assert!(d.entropy.is_finite());
        last = d.entropy;
    }
    assert!(last <= start + 1e-9, "entropy went from {start} to {last}");
}

#[test]
fn truncation_bootstraps_with_next_value() {
    let task = noiseless_lg();
    let mut env = RealEnv::new(task, 0);
    let l = learner(2, 2, 0.0);
    let b = collect_rollouts(&l.policy, &l.value, &mut env, 6, 3, &mut seeded(5)).unwrap();
    assert_eq!(b.boundaries, vec![false, false, true, false, false, true]);
    assert!(b.truncation_values[2] != 0.0 && b.truncation_values[0] == 0.0);
    assert_eq!(b.bootstrap_value, 0.0);
    let mut obs = Matrix::zeros(1, 2);
    obs.row_mut(0).copy_from_slice(b.observations.row(0));
    assert_eq!(l.value.values(&obs).unwrap()[0], b.values[0]);
}

fn me_agent(cfg: MeConfig) -> MePpoAgent {
    let task = make_task(&TaskConfig::named("pendulum")).unwrap();
    let ens = EnsembleConfig {
        ensemble_size: 2,
        hidden: vec![16],
        ..Default::default()
    };
    let train = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let ppo = PpoConfig {
        hidden: vec![16],
        epochs: 2,
        minibatch: 32,
        ..Default::default()
    };
    MePpoAgent::new(&task, &ens, train, ppo, cfg, &mut seeded(0)).unwrap()
}

#[test]
fn me_iteration_contracts() {
    let task = make_task(&TaskConfig::named("pendulum")).unwrap();
    let mut env = RealEnv::new(task, 9);
    let mut rng = seeded(1);

    let mut agent = me_agent(MeConfig {
        real_steps_per_iter: 100,
        virtual_steps_per_iter: 64,
        ppo_updates_per_iter: 0,
        virtual_horizon: 20,
        ..Default::default()
    });
    let before = agent.learner.policy.clone();
    let report = me_ppo_train_iteration(&mut agent, &mut env, &mut rng).unwrap();
    assert_eq!(report.real_steps, 100);
    assert!(report.ppo.is_empty());
    assert_eq!(agent.learner.policy, before);
    assert_eq!(env.total_steps(), 100);

    // no real steps: trains on the existing buffer; virtual updates never touch the real env
    agent.config.real_steps_per_iter = 0;
    agent.config.ppo_updates_per_iter = 2;
    let report = me_ppo_train_iteration(&mut agent, &mut env, &mut rng).unwrap();
    assert_eq!(report.real_steps, 0);
    assert_eq!(report.ppo.len(), 2);
    assert_eq!(agent.buffer.len(), 100);
    assert_eq!(env.total_steps(), 100);
    assert_ne!(agent.learner.policy, before);
    assert!(report.model.holdout_nll.iter().all(|x| x.is_finite()));
}

#[test]
fn me_train_dispatch() {
    let mut agent = me_agent(MeConfig::default());
    assert!(matches!(agent.train("reward", &mut seeded(0)), Err(mbrl::Error::UnsupportedComponent(_))));
    assert!(matches!(agent.train("transition", &mut seeded(0)), Err(mbrl::Error::InsufficientData(_))));
    let mut env = RealEnv::new(make_task(&TaskConfig::named("pendulum")).unwrap(), 0);
    let obs = env.reset(&mut seeded(0));
    let a = agent.act(&obs, &mut seeded(0)).unwrap();
    assert_eq!(a.len(), 1);
}
