use super::*;
use crate::rng::substream;
use proptest::prelude::*;
use rand::Rng;

fn manual_world(
    agent_pos: Vec2,
    agent_heading: f64,
    obstacle_pos: Vec2,
    obstacle_goal: Vec2,
    policy: ObstaclePolicyKind,
    config: ScenarioConfig,
) -> World {
    let agent = AgentState {
        position: agent_pos,
        velocity: Vec2::from_angle(agent_heading) * config.agent_speed,
        heading: agent_heading,
        radius: config.agent_radius,
        goal: Vec2::new(config.goal_distance, 0.0),
        preferred_speed: config.agent_speed,
    };
    let spawn_direction = (obstacle_goal - obstacle_pos).unit();
    let obstacle = ObstacleState {
        position: obstacle_pos,
        velocity: spawn_direction * config.obstacle_speed,
        radius: config.obstacle_radius,
        goal: obstacle_goal,
        preferred_speed: config.obstacle_speed,
        policy,
        spawn_direction,
    };
    World {
        agent,
        obstacle,
        step_count: 0,
        config,
    }
}

#[test]
fn reset_is_deterministic_per_seed() {
    let cfg = ScenarioConfig::default();
    let (w1, o1) = reset(&cfg, &mut substream(3, "env", 0)).unwrap();
    let (w2, o2) = reset(&cfg, &mut substream(3, "env", 0)).unwrap();
    assert_eq!(w1.obstacle.position, w2.obstacle.position);
    assert_eq!(w1.obstacle.goal, w2.obstacle.goal);
    assert_eq!(o1, o2);
}

#[test]
fn reset_rejects_overlapping_spawn() {
    let cfg = ScenarioConfig {
        layout: SpawnLayout::BlockedGoal {
            obstacle_distance: 0.2,
        },
        obstacle_policy: ObstaclePolicyKind::Static,
        ..ScenarioConfig::default()
    };
    let err = reset(&cfg, &mut substream(0, "env", 0)).unwrap_err();
    assert!(matches!(err, Error::OverlappingSpawn { .. }));
}

#[test]
fn reset_places_goal_at_configured_distance() {
    let cfg = ScenarioConfig::default();
    let (world, obs) = reset(&cfg, &mut substream(1, "env", 0)).unwrap();
    assert!((world.agent.position.dist(world.agent.goal) - cfg.goal_distance).abs() < 1e-12);
    // Ego frame at heading 0 from the origin: relative goal is the goal itself.
    assert!((obs.relative_goal.x - cfg.goal_distance).abs() < 1e-12);
    assert!(obs.relative_goal.y.abs() < 1e-12);
}

#[test]
fn far_static_obstacle_never_collides_in_one_step() {
    let cfg = ScenarioConfig::default();
    let mut world = manual_world(
        Vec2::ZERO,
        0.0,
        Vec2::new(100.0, 0.0),
        Vec2::new(100.0, 0.0),
        ObstaclePolicyKind::Static,
        cfg,
    );
    let out = world.step(0.0, 1.0);
    assert!(!out.collided);
    assert!(!out.done);
}

#[test]
fn coincident_positions_collide_immediately() {
    let cfg = ScenarioConfig::default();
    let mut world = manual_world(
        Vec2::new(1.0, 1.0),
        0.0,
        Vec2::new(1.0, 1.0),
        Vec2::new(5.0, 5.0),
        ObstaclePolicyKind::Static,
        cfg,
    );
    let out = world.step(0.0, 1.0);
    assert!(out.collided);
    assert!(out.done);
}

#[test]
fn head_on_collision_matches_analytic_closest_approach() {
    // Agent east at 1 m/s from the origin; obstacle west at 1 m/s from
    // (4, 0.1). |p_rel(t)|^2 = (4 - 2t)^2 + 0.01 reaches r_sum = 0.6 at
    // t = (4 - sqrt(0.35))/2 = 1.7042 s, i.e. during step 18 at dt = 0.1.
    let cfg = ScenarioConfig {
        timeout_steps: 400,
        goal_distance: 1000.0,
        ..ScenarioConfig::default()
    };
    let mut world = manual_world(
        Vec2::ZERO,
        0.0,
        Vec2::new(4.0, 0.1),
        Vec2::new(-100.0, 0.1),
        ObstaclePolicyKind::Noncooperative,
        cfg,
    );
    let analytic_step = ((4.0 - 0.35f64.sqrt()) / 2.0 / 0.1).ceil() as i64;
    let mut collided_at = None;
    for step in 1..200 {
        let out = world.step(0.0, 1.0);
        if out.collided {
            collided_at = Some(step);
            break;
        }
    }
    let got = collided_at.expect("head-on course must collide");
    assert!(
        (got - analytic_step).abs() <= 1,
        "collided at step {got}, analytic {analytic_step}"
    );
}

#[test]
fn random_crossing_spawns_produce_frequent_collisions_for_a_straight_agent() {
    let cfg = ScenarioConfig {
        obstacle_policy: ObstaclePolicyKind::Noncooperative,
        ..ScenarioConfig::default()
    };
    let mut collisions = 0;
    for seed in 0..50 {
        let (mut world, _) = reset(&cfg, &mut substream(seed, "crossing", 0)).unwrap();
        loop {
            let out = world.step(0.0, 1.0);
            if out.collided {
                collisions += 1;
                break;
            }
            if out.done {
                break;
            }
        }
    }
    assert!(
        collisions >= 35,
        "expected most straight-line runs to collide, got {collisions}/50"
    );
}

#[test]
fn episodes_terminate_within_timeout() {
    let cfg = ScenarioConfig {
        goal_distance: 1e6,
        ..ScenarioConfig::default()
    };
    let mut world = manual_world(
        Vec2::ZERO,
        0.0,
        Vec2::new(1000.0, 0.0),
        Vec2::new(1000.0, 0.0),
        ObstaclePolicyKind::Static,
        cfg.clone(),
    );
    let mut steps = 0;
    loop {
        steps += 1;
        if world.step(0.0, 1.0).done {
            break;
        }
        assert!(steps <= cfg.timeout_steps, "must terminate by timeout");
    }
    assert_eq!(steps, cfg.timeout_steps);
}

#[test]
fn rvo_without_conflict_heads_to_goal_at_preferred_speed() {
    let cfg = ScenarioConfig::default();
    let world = manual_world(
        Vec2::new(100.0, 50.0),
        0.0,
        Vec2::ZERO,
        Vec2::new(10.0, 0.0),
        ObstaclePolicyKind::Rvo,
        cfg,
    );
    let v = rvo_velocity(
        &world.obstacle,
        world.agent.position,
        Vec2::ZERO,
        world.agent.radius,
        &RvoParams::default(),
    );
    assert!((v.x - 1.0).abs() < 1e-12);
    assert!(v.y.abs() < 1e-12);
}

#[test]
fn rvo_head_on_encounter_deviates_from_straight_line() {
    let cfg = ScenarioConfig::default();
    let world = manual_world(
        Vec2::ZERO,
        0.0,
        Vec2::new(4.0, 0.0),
        Vec2::new(-10.0, 0.0),
        ObstaclePolicyKind::Rvo,
        cfg,
    );
    let v = rvo_velocity(
        &world.obstacle,
        world.agent.position,
        world.agent.velocity,
        world.agent.radius,
        &RvoParams::default(),
    );
    let v_pref = Vec2::new(-1.0, 0.0);
    assert!(
        (v - v_pref).norm() > 1e-9,
        "conflicting head-on course must deviate, got {v:?}"
    );
    assert!(v.norm() <= 1.0 + 1e-12);
}

/// Independent re-implementation of the candidate scan used as an oracle:
/// enumerate the full grid, order by (|deviation|, sign), pick the first
/// half-corrected velocity that clears, else the max-separation one.
fn rvo_oracle(
    obstacle: &ObstacleState,
    agent_pos: Vec2,
    agent_vel: Vec2,
    agent_radius: f64,
    params: &RvoParams,
) -> Vec2 {
    let v_pref = (obstacle.goal - obstacle.position).unit() * obstacle.preferred_speed;
    let clearance = obstacle.radius + agent_radius + params.margin;
    let sep_of = |v: Vec2| {
        min_separation(obstacle.position - agent_pos, v - agent_vel, params.horizon)
    };
    if sep_of(v_pref) >= clearance {
        return v_pref;
    }
    let step = params.max_deviation / params.half_candidates as f64;
    let mut grid: Vec<f64> = (-(params.half_candidates as i64)..=params.half_candidates as i64)
        .map(|k| k as f64 * step)
        .collect();
    grid.sort_by(|a, b| {
        (a.abs(), *a)
            .partial_cmp(&(b.abs(), *b))
            .expect("finite deviations")
    });
    let mut best: Option<(f64, Vec2)> = None;
    for dev in grid {
        let v_half =
            (v_pref + Vec2::from_angle(v_pref.angle() + dev) * obstacle.preferred_speed) * 0.5;
        let sep = sep_of(v_half);
        if sep >= clearance {
            return v_half;
        }
        if best.as_ref().map_or(true, |(s, _)| sep > *s) {
            best = Some((sep, v_half));
        }
    }
    best.unwrap().1
}

#[test]
fn rvo_matches_exhaustive_candidate_oracle() {
    let cfg = ScenarioConfig::default();
    let params = RvoParams::default();
    let mut rng = substream(17, "rvo-oracle", 0);
    for _ in 0..200 {
        let obstacle_pos = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let goal = Vec2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let agent_pos = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let heading = rng.gen_range(-3.14..3.14);
        if obstacle_pos.dist(goal) < 0.1 {
            continue;
        }
        let world = manual_world(
            agent_pos,
            heading,
            obstacle_pos,
            goal,
            ObstaclePolicyKind::Rvo,
            cfg.clone(),
        );
        let got = rvo_velocity(
            &world.obstacle,
            agent_pos,
            world.agent.velocity,
            world.agent.radius,
            &params,
        );
        let want = rvo_oracle(
            &world.obstacle,
            agent_pos,
            world.agent.velocity,
            world.agent.radius,
            &params,
        );
        assert!(
            (got - want).norm() < 1e-12,
            "mismatch: got {got:?}, oracle {want:?}"
        );
    }
}

#[test]
fn noncooperative_policy_is_constant_toward_its_goal() {
    let cfg = ScenarioConfig::default();
    let mut world = manual_world(
        Vec2::ZERO,
        0.0,
        Vec2::new(0.0, 3.0),
        Vec2::new(10.0, 3.0), // due east
        ObstaclePolicyKind::Noncooperative,
        cfg,
    );
    let v0 = noncooperative_velocity(&world.obstacle);
    assert!((v0.x - 1.0).abs() < 1e-12 && v0.y.abs() < 1e-12);
    for _ in 0..20 {
        world.step(0.1, 1.0);
        let v = noncooperative_velocity(&world.obstacle);
        assert_eq!(v, v0, "heading must be time-invariant");
    }
}

#[test]
fn static_policy_is_zero() {
    assert_eq!(static_velocity(), Vec2::ZERO);
}

#[test]
fn perturbation_none_is_identity() {
    let cfg = ScenarioConfig::default();
    let (world, obs) = reset(&cfg, &mut substream(5, "env", 0)).unwrap();
    let mut rng = substream(5, "perturb", 0);
    let out = perturb_observation(&obs, &Perturbation::None, &mut rng);
    assert_eq!(out, obs);
    // With no perturbation, observation fields mirror ground truth exactly
    // (heading 0 at the origin makes the ego transform the identity).
    assert_eq!(out.obstacle_position, world.obstacle.position);
    assert_eq!(out.obstacle_velocity, world.obstacle.velocity);
    assert_eq!(out.obstacle_radius, world.obstacle.radius);
}

#[test]
fn mask_position_zeroes_position_and_flag_only() {
    let cfg = ScenarioConfig::default();
    let (_, obs) = reset(&cfg, &mut substream(6, "env", 0)).unwrap();
    let mut rng = substream(6, "perturb", 0);
    let out = perturb_observation(&obs, &Perturbation::MaskPosition, &mut rng);
    assert_eq!(out.obstacle_position, Vec2::ZERO);
    assert!(!out.position_valid);
    assert_eq!(out.obstacle_velocity, obs.obstacle_velocity);
    assert!(out.velocity_valid);
    assert!(out.frame_valid);
    assert_eq!(out.relative_goal, obs.relative_goal);

    let out = perturb_observation(&obs, &Perturbation::MaskVelocity, &mut rng);
    assert_eq!(out.obstacle_velocity, Vec2::ZERO);
    assert!(!out.velocity_valid);
    assert_eq!(out.obstacle_position, obs.obstacle_position);
}

#[test]
fn dropped_frames_zero_all_obstacle_fields() {
    let cfg = ScenarioConfig::default();
    let (_, obs) = reset(&cfg, &mut substream(7, "env", 0)).unwrap();
    let mut rng = substream(7, "perturb", 0);
    let mut dropped = 0;
    for _ in 0..2000 {
        let out = perturb_observation(&obs, &Perturbation::Drop { p_drop: 0.2 }, &mut rng);
        if !out.frame_valid {
            dropped += 1;
            assert_eq!(out.obstacle_position, Vec2::ZERO);
            assert_eq!(out.obstacle_velocity, Vec2::ZERO);
            assert_eq!(out.obstacle_radius, 0.0);
            assert!(!out.position_valid && !out.velocity_valid);
            assert_eq!(out.relative_goal, obs.relative_goal);
        } else {
            assert_eq!(out, obs);
        }
    }
    let fraction = dropped as f64 / 2000.0;
    assert!((fraction - 0.2).abs() < 0.04, "drop fraction {fraction}");
}

#[test]
fn gaussian_noise_has_the_configured_spread() {
    let cfg = ScenarioConfig::default();
    let (_, obs) = reset(&cfg, &mut substream(8, "env", 0)).unwrap();
    let mut rng = substream(8, "perturb", 0);
    let n = 100_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let out = perturb_observation(
            &obs,
            &Perturbation::GaussianNoise { sigma: 0.5 },
            &mut rng,
        );
        let d = out.obstacle_position.x - obs.obstacle_position.x;
        sum += d;
        sum_sq += d * d;
        assert_eq!(out.relative_goal, obs.relative_goal);
    }
    let mean = sum / n as f64;
    let std = (sum_sq / n as f64 - mean * mean).sqrt();
    assert!(mean.abs() < 0.01, "noise mean {mean}");
    assert!((std - 0.5).abs() < 0.01, "noise std {std}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_predicate_is_symmetric_and_rigid_motion_invariant(
        x1 in -10.0..10.0f64, y1 in -10.0..10.0f64,
        x2 in -10.0..10.0f64, y2 in -10.0..10.0f64,
        r1 in 0.05..2.0f64, r2 in 0.05..2.0f64,
        angle in -3.2..3.2f64, tx in -5.0..5.0f64, ty in -5.0..5.0f64,
    ) {
        let p1 = Vec2::new(x1, y1);
        let p2 = Vec2::new(x2, y2);
        let base = circles_collide(p1, r1, p2, r2);
        prop_assert_eq!(base, circles_collide(p2, r2, p1, r1));
        let shift = Vec2::new(tx, ty);
        let q1 = p1.rotate(angle) + shift;
        let q2 = p2.rotate(angle) + shift;
        // Guard against boundary flips from rotation rounding.
        let gap = (p1.dist(p2) - (r1 + r2)).abs();
        if gap > 1e-9 {
            prop_assert_eq!(base, circles_collide(q1, r1, q2, r2));
        }
    }
}
