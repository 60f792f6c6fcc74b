use super::*;
use crate::ensemble::EnsembleConfig;
use crate::env::{ObstaclePolicyKind, SpawnLayout};
use crate::geom::Vec2;
use crate::rng::substream;

fn tiny_ensemble_config() -> EnsembleConfig {
    EnsembleConfig {
        members: 2,
        passes: 2,
        p_keep: 0.7,
        hidden_size: 4,
        history_len: 8,
    }
}

fn fake_record(steps: usize, collided: bool) -> EpisodeRecord {
    EpisodeRecord {
        steps: (0..steps)
            .map(|t| RecordStep {
                observation: Observation {
                    obstacle_position: Vec2::new(t as f64, 1.0),
                    obstacle_velocity: Vec2::new(-1.0, 0.0),
                    obstacle_radius: 0.3,
                    relative_goal: Vec2::new(6.0 - t as f64 * 0.1, 0.0),
                    position_valid: true,
                    velocity_valid: true,
                    frame_valid: true,
                },
                action_index: t % 11,
                action_heading: 0.01 * t as f64,
            })
            .collect(),
        collided,
        reached_goal: !collided,
        timed_out: false,
    }
}

#[test]
fn one_step_episode_yields_one_window_of_length_one() {
    let record = fake_record(1, true);
    let examples = windows_from_episode(&record, 8);
    assert_eq!(examples.len(), 1);
    assert_eq!(examples[0].features.len(), 1);
    assert_eq!(examples[0].label, 1.0);
}

#[test]
fn window_lengths_grow_then_cap_at_history_len() {
    let record = fake_record(20, false);
    let examples = windows_from_episode(&record, 8);
    assert_eq!(examples.len(), 20);
    let lengths: Vec<usize> = examples.iter().map(|e| e.features.len()).collect();
    let expected: Vec<usize> = (0..20).map(|t| (t + 1).min(8)).collect();
    assert_eq!(lengths, expected);
}

#[test]
fn collision_episodes_label_every_window_one() {
    let record = fake_record(7, true);
    assert!(windows_from_episode(&record, 8)
        .iter()
        .all(|e| e.label == 1.0));
    let record = fake_record(7, false);
    assert!(windows_from_episode(&record, 8)
        .iter()
        .all(|e| e.label == 0.0));
}

#[test]
fn windows_carry_the_action_evaluated_at_their_step() {
    let record = fake_record(5, false);
    let examples = windows_from_episode(&record, 3);
    for (t, ex) in examples.iter().enumerate() {
        let last_row = ex.features.last().unwrap();
        assert_eq!(last_row[10], 0.01 * t as f64);
    }
}

#[test]
fn datasets_never_mix_episodes() {
    let mut dataset = ExperienceDataset::new(8);
    dataset.push_episode(&fake_record(4, true));
    dataset.push_episode(&fake_record(3, false));
    assert_eq!(dataset.len(), 7);
    for (i, ex) in dataset.examples.iter().enumerate() {
        let expected_label = if i < 4 { 1.0 } else { 0.0 };
        assert_eq!(ex.label, expected_label);
        // Window lengths restart at the episode boundary.
        let expected_len = if i < 4 { i + 1 } else { i - 4 + 1 };
        assert_eq!(ex.features.len(), expected_len.min(8));
    }
}

fn zeroed_ensemble() -> Ensemble {
    let cfg = EnsembleConfig {
        members: 1,
        passes: 1,
        p_keep: 1.0,
        hidden_size: 4,
        history_len: 8,
    };
    let mut ensemble = Ensemble::collision_predictor(cfg, 0).unwrap();
    ensemble.members[0] = ensemble.members[0].zeroed_like();
    ensemble
}

#[test]
fn empty_world_with_flat_predictor_reaches_goal() {
    // A zeroed predictor scores every primitive identically, so the policy
    // reduces to the goal term and traces a straight line.
    let scenario = ScenarioConfig {
        goal_distance: 6.05,
        layout: SpawnLayout::BlockedGoal {
            obstacle_distance: 500.0,
        },
        obstacle_policy: ObstaclePolicyKind::Static,
        ..ScenarioConfig::default()
    };
    let ensemble = zeroed_ensemble();
    let primitives = policy::primitive_set();
    let weights = CostWeights::default();
    let mut lambda = LambdaTracker::constant(200.0);
    let mut rng = substream(1, "episode", 0);
    let (record, trace) = run_episode(
        &scenario,
        &primitives,
        &weights,
        &ensemble,
        &mut lambda,
        0,
        0,
        &mut rng,
    )
    .unwrap();
    assert!(record.reached_goal);
    assert!(!record.collided);
    assert_eq!(record.label(), 0.0);
    // 6.05 m at 1 m/s, 0.1 s steps, 0.3 m threshold: inside after step 58.
    assert_eq!(record.steps.len(), 58, "straight-line step count");
    assert_eq!(trace.steps.len(), record.steps.len());
    assert!(trace
        .steps
        .iter()
        .all(|s| s.action_index == 5), "straight primitive everywhere");
}

#[test]
fn near_contact_spawn_collides_in_one_step() {
    let scenario = ScenarioConfig {
        layout: SpawnLayout::BlockedGoal {
            obstacle_distance: 0.65,
        },
        obstacle_policy: ObstaclePolicyKind::Static,
        ..ScenarioConfig::default()
    };
    let ensemble = zeroed_ensemble();
    let primitives = policy::primitive_set();
    let weights = CostWeights::default();
    let mut lambda = LambdaTracker::constant(200.0);
    let mut rng = substream(2, "episode", 0);
    let (record, _) = run_episode(
        &scenario,
        &primitives,
        &weights,
        &ensemble,
        &mut lambda,
        0,
        0,
        &mut rng,
    )
    .unwrap();
    assert!(record.collided);
    assert_eq!(record.steps.len(), 1);
    assert_eq!(record.label(), 1.0);
}

#[test]
fn identical_seed_and_resample_trains_identical_members() {
    let mut ensemble = Ensemble::collision_predictor(tiny_ensemble_config(), 7).unwrap();
    let clone = ensemble.members[0].clone();
    ensemble.members[1] = clone;
    let mut dataset = ExperienceDataset::new(8);
    dataset.push_episode(&fake_record(6, true));
    dataset.push_episode(&fake_record(5, false));
    let a = train_member(&mut ensemble.members[0].clone(), &dataset, 3, 4, 1e-3, 0.7, 99)
        .unwrap();
    let mut m0 = ensemble.members[0].clone();
    let mut m1 = ensemble.members[1].clone();
    train_member(&mut m0, &dataset, 3, 4, 1e-3, 0.7, 99).unwrap();
    let b = train_member(&mut m1, &dataset, 3, 4, 1e-3, 0.7, 99).unwrap();
    assert_eq!(m0.flatten(), m1.flatten());
    assert_eq!(a, b);
}

#[test]
fn different_resamples_produce_different_members() {
    let mut ensemble = Ensemble::collision_predictor(tiny_ensemble_config(), 7).unwrap();
    ensemble.members[1] = ensemble.members[0].clone();
    let mut dataset = ExperienceDataset::new(8);
    for i in 0..5 {
        dataset.push_episode(&fake_record(4 + i, i % 2 == 0));
    }
    let mut rng = substream(3, "session", 0);
    train_session(&mut ensemble, &dataset, 2, 4, 1e-3, &mut rng).unwrap();
    assert_ne!(
        ensemble.members[0].flatten(),
        ensemble.members[1].flatten(),
        "independent resamples and masks must separate the members"
    );
}

#[test]
fn train_session_rejects_empty_dataset() {
    let mut ensemble = Ensemble::collision_predictor(tiny_ensemble_config(), 7).unwrap();
    let dataset = ExperienceDataset::new(8);
    let mut rng = substream(0, "session", 0);
    assert!(train_session(&mut ensemble, &dataset, 1, 4, 1e-3, &mut rng).is_err());
}

#[test]
fn separable_toy_set_trains_below_loss_threshold() {
    // 200 windows whose label is linearly decodable from the last row's
    // obstacle x-coordinate sign.
    let mut dataset = ExperienceDataset::new(8);
    let mut rng = substream(11, "separable", 0);
    for _ in 0..200 {
        let x: f64 = rand::Rng::gen_range(&mut rng, -2.0..2.0);
        let mut row = vec![0.0; crate::features::FEATURE_WIDTH];
        row[0] = x;
        row[7] = 1.0;
        row[8] = 1.0;
        row[9] = 1.0;
        dataset.examples.push(TrainingExample {
            features: vec![row],
            label: (x > 0.0) as u8 as f64,
        });
    }
    let cfg = EnsembleConfig {
        members: 2,
        passes: 2,
        p_keep: 0.7,
        hidden_size: 16,
        history_len: 8,
    };
    let mut ensemble = Ensemble::collision_predictor(cfg, 5).unwrap();
    let mut session_rng = substream(11, "separable-train", 0);
    let mean_loss = train_session(&mut ensemble, &dataset, 50, 32, 1e-3, &mut session_rng).unwrap();
    assert!(mean_loss < 0.3, "mean BCE after training: {mean_loss}");
}

fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        sessions: 2,
        episodes_per_session: 2,
        epochs_per_session: 2,
        batch_size: 8,
        learning_rate: 1e-3,
        schedule_steps: Some(100),
        lambda_mode: LambdaMode::Scheduled,
        seed: 42,
        ensemble: tiny_ensemble_config(),
        weights: CostWeights::default(),
        scenario: ScenarioConfig {
            timeout_steps: 40,
            ..ScenarioConfig::default()
        },
    }
}

#[test]
fn train_loop_single_episode_fills_dataset_with_one_episode() {
    let config = TrainConfig {
        sessions: 1,
        episodes_per_session: 1,
        ..tiny_train_config()
    };
    let outcome = train_loop(&config).unwrap();
    assert_eq!(outcome.metrics.len(), 1);
    assert_eq!(outcome.metrics[0].steps, outcome.dataset.len());
    assert_eq!(outcome.metrics[0].dataset_size, outcome.dataset.len());
}

#[test]
fn train_loop_metrics_row_per_session_and_deterministic() {
    let config = tiny_train_config();
    let a = train_loop(&config).unwrap();
    assert_eq!(a.metrics.len(), config.sessions);
    let b = train_loop(&config).unwrap();
    assert_eq!(metrics_to_csv(&a.metrics), metrics_to_csv(&b.metrics));
    for (ma, mb) in a.ensemble.members.iter().zip(&b.ensemble.members) {
        assert_eq!(ma.flatten(), mb.flatten(), "trained weights reproduce");
    }
}

#[test]
fn lambda_tracker_advances_on_schedule() {
    let mut lambda = LambdaTracker::new(LambdaMode::Scheduled, CostWeights::default(), 100);
    assert_eq!(lambda.value().unwrap(), -50_000.0);
    for _ in 0..100 {
        lambda.advance();
    }
    assert_eq!(lambda.value().unwrap(), 200.0);
    lambda.advance();
    assert_eq!(lambda.value().unwrap(), 200.0);
}
