//! 2D kinematic world: one agent, one dynamic obstacle.
//!
//! The agent commands a heading change and speed each step; the obstacle
//! follows its own policy (simplified reciprocal avoidance, non-cooperative
//! straight line, or static). Positions integrate with a fixed `dt` in
//! sub-sampled increments so fast crossings cannot tunnel through the
//! collision check.
//!
//! Observations are emitted in the agent's ego frame (x along the current
//! heading). Perturbations apply to emitted observations only — ground-truth
//! dynamics never see them.

mod policies;

pub use policies::{
    min_separation, noncooperative_velocity, rvo_velocity, static_velocity, RvoParams,
};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Collision-check sub-samples per step.
const SUBSTEPS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Direction of travel, radians from +x.
    pub heading: f64,
    pub radius: f64,
    pub goal: Vec2,
    pub preferred_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstaclePolicyKind {
    Rvo,
    Noncooperative,
    Static,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
    pub preferred_speed: f64,
    pub policy: ObstaclePolicyKind,
    /// Heading locked at spawn; the non-cooperative policy never re-aims.
    pub spawn_direction: Vec2,
}

/// What the agent senses: obstacle kinematics and its own relative goal,
/// all in the ego frame, with per-field validity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub obstacle_position: Vec2,
    pub obstacle_velocity: Vec2,
    pub obstacle_radius: f64,
    pub relative_goal: Vec2,
    pub position_valid: bool,
    pub velocity_valid: bool,
    /// False means the whole obstacle frame was dropped this step.
    pub frame_valid: bool,
}

/// Observation manipulations used to build novelty scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    GaussianNoise { sigma: f64 },
    Drop { p_drop: f64 },
    MaskVelocity,
    MaskPosition,
}

impl Perturbation {
    pub const DEFAULT_SIGMA: f64 = 0.5;
    pub const DEFAULT_P_DROP: f64 = 0.2;

    pub fn validate(&self) -> Result<()> {
        match *self {
            Perturbation::GaussianNoise { sigma } if sigma < 0.0 => Err(Error::InvalidParameter(
                format!("noise sigma must be >= 0, got {sigma}"),
            )),
            Perturbation::Drop { p_drop } if !(0.0..=1.0).contains(&p_drop) => Err(
                Error::InvalidParameter(format!("p_drop must be in [0, 1], got {p_drop}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Where the agent and obstacle start an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpawnLayout {
    /// Obstacle spawned 3-5 m away within ±60° of the agent's path, on a
    /// collision course with the agent's nominal straight-line motion.
    RandomCrossing {
        min_distance: f64,
        max_distance: f64,
        max_angle_deg: f64,
    },
    /// Static-obstacle layout: obstacle sits on the straight line to the
    /// goal, `obstacle_distance` metres ahead of the agent.
    BlockedGoal { obstacle_distance: f64 },
}

impl Default for SpawnLayout {
    fn default() -> Self {
        SpawnLayout::RandomCrossing {
            min_distance: 3.0,
            max_distance: 5.0,
            max_angle_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub timeout_steps: usize,
    pub goal_threshold: f64,
    pub goal_distance: f64,
    pub agent_radius: f64,
    pub agent_speed: f64,
    pub obstacle_radius: f64,
    pub obstacle_speed: f64,
    pub obstacle_policy: ObstaclePolicyKind,
    pub layout: SpawnLayout,
    pub perturbation: Perturbation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            dt: 0.1,
            timeout_steps: 200,
            goal_threshold: 0.3,
            goal_distance: 6.0,
            agent_radius: 0.3,
            agent_speed: 1.0,
            obstacle_radius: 0.3,
            obstacle_speed: 1.0,
            obstacle_policy: ObstaclePolicyKind::Rvo,
            layout: SpawnLayout::default(),
            perturbation: Perturbation::None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.timeout_steps == 0 {
            return Err(Error::InvalidParameter("timeout_steps must be > 0".into()));
        }
        if self.agent_radius <= 0.0 || self.obstacle_radius <= 0.0 {
            return Err(Error::InvalidParameter("radii must be > 0".into()));
        }
        if self.agent_speed <= 0.0 || self.obstacle_speed < 0.0 {
            return Err(Error::InvalidParameter("speeds must be positive".into()));
        }
        self.perturbation.validate()
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub agent: AgentState,
    pub obstacle: ObstacleState,
    pub step_count: usize,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub done: bool,
    pub collided: bool,
    pub reached_goal: bool,
    pub timed_out: bool,
}

/// True when two discs overlap. Symmetric and invariant under any global
/// translation/rotation, since only the centre distance enters.
pub fn circles_collide(p1: Vec2, r1: f64, p2: Vec2, r2: f64) -> bool {
    p1.dist(p2) < r1 + r2
}

/// Spawn a world per the scenario layout; the episode clock starts at zero.
pub fn reset(config: &ScenarioConfig, rng: &mut impl Rng) -> Result<(World, Observation)> {
    config.validate()?;
    let agent = AgentState {
        position: Vec2::ZERO,
        velocity: Vec2::from_angle(0.0) * config.agent_speed,
        heading: 0.0,
        radius: config.agent_radius,
        goal: Vec2::new(config.goal_distance, 0.0),
        preferred_speed: config.agent_speed,
    };

    let (obstacle_pos, obstacle_goal) = match config.layout {
        SpawnLayout::RandomCrossing {
            min_distance,
            max_distance,
            max_angle_deg,
        } => {
            let angle = rng.gen_range(-max_angle_deg.to_radians()..max_angle_deg.to_radians());
            let dist = rng.gen_range(min_distance..max_distance);
            let pos = Vec2::from_angle(angle) * dist;
            // Aim through the point where the agent's nominal straight-line
            // motion would be when the obstacle reaches it, so that doing
            // nothing frequently collides.
            let hit = intercept_point(pos, config.obstacle_speed, config.agent_speed);
            let dir = (hit - pos).unit();
            let goal = pos + dir * (pos.dist(hit) + 4.0);
            (pos, goal)
        }
        SpawnLayout::BlockedGoal { obstacle_distance } => {
            let pos = Vec2::new(obstacle_distance, 0.0);
            (pos, pos)
        }
    };

    let min_separation = config.agent_radius + config.obstacle_radius;
    let separation = agent.position.dist(obstacle_pos);
    if separation < min_separation {
        return Err(Error::OverlappingSpawn {
            separation,
            min_separation,
        });
    }

    let spawn_direction = (obstacle_goal - obstacle_pos).unit();
    let mut obstacle = ObstacleState {
        position: obstacle_pos,
        velocity: Vec2::ZERO,
        radius: config.obstacle_radius,
        goal: obstacle_goal,
        preferred_speed: config.obstacle_speed,
        policy: config.obstacle_policy,
        spawn_direction,
    };
    obstacle.velocity = obstacle_velocity(&obstacle, &agent);

    let world = World {
        agent,
        obstacle,
        step_count: 0,
        config: config.clone(),
    };
    let obs = observe(&world);
    Ok((world, obs))
}

/// Intercept point of an agent moving along +x at `agent_speed` for a chaser
/// at `from` with `chaser_speed`: the spot on the x-axis both reach at the
/// same time (falls back to the foot of the perpendicular when no solution).
fn intercept_point(from: Vec2, chaser_speed: f64, agent_speed: f64) -> Vec2 {
    // Solve |(t*va, 0) - from| = vc * t for t >= 0.
    let a = agent_speed * agent_speed - chaser_speed * chaser_speed;
    let b = -2.0 * agent_speed * from.x;
    let c = from.norm_sq();
    let t = if a.abs() < 1e-12 {
        if b.abs() < 1e-12 {
            return Vec2::new(from.x, 0.0);
        }
        -c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Vec2::new(from.x, 0.0);
        }
        let sq = disc.sqrt();
        let t1 = (-b - sq) / (2.0 * a);
        let t2 = (-b + sq) / (2.0 * a);
        match (t1 > 0.0, t2 > 0.0) {
            (true, true) => t1.min(t2),
            (true, false) => t1,
            (false, true) => t2,
            (false, false) => return Vec2::new(from.x, 0.0),
        }
    };
    if t > 0.0 {
        Vec2::new(agent_speed * t, 0.0)
    } else {
        Vec2::new(from.x, 0.0)
    }
}

fn obstacle_velocity(obstacle: &ObstacleState, agent: &AgentState) -> Vec2 {
    match obstacle.policy {
        ObstaclePolicyKind::Rvo => rvo_velocity(
            obstacle,
            agent.position,
            agent.velocity,
            agent.radius,
            &RvoParams::default(),
        ),
        ObstaclePolicyKind::Noncooperative => noncooperative_velocity(obstacle),
        ObstaclePolicyKind::Static => static_velocity(),
    }
}

impl World {
    /// Advance one step: the agent turns by `heading_delta` and moves at
    /// `speed`; the obstacle moves per its policy. Collision is checked at
    /// every substep; `collided` takes precedence over `reached_goal`.
    pub fn step(&mut self, heading_delta: f64, speed: f64) -> StepOutcome {
        let cfg = &self.config;
        self.agent.heading += heading_delta;
        self.agent.velocity = Vec2::from_angle(self.agent.heading) * speed;
        self.obstacle.velocity = obstacle_velocity(&self.obstacle, &self.agent);

        let sub_dt = cfg.dt / SUBSTEPS as f64;
        let mut collided = circles_collide(
            self.agent.position,
            self.agent.radius,
            self.obstacle.position,
            self.obstacle.radius,
        );
        for _ in 0..SUBSTEPS {
            if collided {
                break;
            }
            self.agent.position += self.agent.velocity * sub_dt;
            self.obstacle.position += self.obstacle.velocity * sub_dt;
            collided = circles_collide(
                self.agent.position,
                self.agent.radius,
                self.obstacle.position,
                self.obstacle.radius,
            );
        }

        self.step_count += 1;
        let reached_goal = !collided && self.agent.position.dist(self.agent.goal) < cfg.goal_threshold;
        let timed_out = self.step_count >= cfg.timeout_steps;
        let done = collided || reached_goal || timed_out;
        StepOutcome {
            observation: observe(self),
            done,
            collided,
            reached_goal,
            timed_out,
        }
    }
}

/// Exact (unperturbed) observation of the world in the agent's ego frame.
pub fn observe(world: &World) -> Observation {
    let agent = &world.agent;
    let to_ego = |v: Vec2| v.rotate(-agent.heading);
    Observation {
        obstacle_position: to_ego(world.obstacle.position - agent.position),
        obstacle_velocity: to_ego(world.obstacle.velocity),
        obstacle_radius: world.obstacle.radius,
        relative_goal: to_ego(agent.goal - agent.position),
        position_valid: true,
        velocity_valid: true,
        frame_valid: true,
    }
}

/// Apply an observation perturbation. Ground truth is untouched; the
/// relative goal is never perturbed.
pub fn perturb_observation(
    obs: &Observation,
    perturbation: &Perturbation,
    rng: &mut impl Rng,
) -> Observation {
    let mut out = obs.clone();
    match *perturbation {
        Perturbation::None => {}
        Perturbation::GaussianNoise { sigma } => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                out.obstacle_position.x += normal.sample(rng);
                out.obstacle_position.y += normal.sample(rng);
                out.obstacle_velocity.x += normal.sample(rng);
                out.obstacle_velocity.y += normal.sample(rng);
            }
        }
        Perturbation::Drop { p_drop } => {
            if rng.gen::<f64>() < p_drop {
                out.obstacle_position = Vec2::ZERO;
                out.obstacle_velocity = Vec2::ZERO;
                out.obstacle_radius = 0.0;
                out.position_valid = false;
                out.velocity_valid = false;
                out.frame_valid = false;
            }
        }
        Perturbation::MaskVelocity => {
            out.obstacle_velocity = Vec2::ZERO;
            out.velocity_valid = false;
        }
        Perturbation::MaskPosition => {
            out.obstacle_position = Vec2::ZERO;
            out.position_valid = false;
        }
    }
    out
}

#[cfg(test)]
mod tests;
