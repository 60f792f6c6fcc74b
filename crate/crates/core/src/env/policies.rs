//! Obstacle steering policies.

use crate::geom::Vec2;

use super::ObstacleState;

/// Tuning for the simplified reciprocal avoidance rule.
#[derive(Debug, Clone, Copy)]
pub struct RvoParams {
    /// Conflict prediction horizon, seconds.
    pub horizon: f64,
    /// Extra clearance added to the radius sum, metres.
    pub margin: f64,
    /// Candidate headings per side of the preferred direction.
    pub half_candidates: usize,
    /// Largest heading deviation considered, radians.
    pub max_deviation: f64,
}

impl Default for RvoParams {
    fn default() -> Self {
        RvoParams {
            horizon: 3.0,
            margin: 0.1,
            half_candidates: 10,
            max_deviation: 60f64.to_radians(),
        }
    }
}

/// Minimum separation predicted over `[0, horizon]` for constant velocities.
pub fn min_separation(rel_pos: Vec2, rel_vel: Vec2, horizon: f64) -> f64 {
    let v2 = rel_vel.norm_sq();
    let t = if v2 > 0.0 {
        (-rel_pos.dot(rel_vel) / v2).clamp(0.0, horizon)
    } else {
        0.0
    };
    (rel_pos + rel_vel * t).norm()
}

fn conflict(
    obstacle_pos: Vec2,
    obstacle_vel: Vec2,
    agent_pos: Vec2,
    agent_vel: Vec2,
    clearance: f64,
    horizon: f64,
) -> bool {
    min_separation(obstacle_pos - agent_pos, obstacle_vel - agent_vel, horizon) < clearance
}

/// Candidate heading deviations ordered by smallest turn first, right (-)
/// before left (+) on equal magnitude. Includes the zero deviation.
fn deviation_order(params: &RvoParams) -> Vec<f64> {
    let step = params.max_deviation / params.half_candidates as f64;
    let mut devs = vec![0.0];
    for k in 1..=params.half_candidates {
        devs.push(-(k as f64) * step);
        devs.push(k as f64 * step);
    }
    devs
}

/// Simplified reciprocal collision avoidance.
///
/// Heads straight to the obstacle's goal when no conflict is predicted
/// within the horizon. Otherwise scans candidate headings by growing
/// deviation and returns the half-corrected velocity (the obstacle takes
/// half the responsibility for the correction) of the first candidate that
/// clears the margin; if none clears, the one maximizing predicted
/// separation wins. The returned magnitude never exceeds the preferred
/// speed.
pub fn rvo_velocity(
    obstacle: &ObstacleState,
    agent_pos: Vec2,
    agent_vel: Vec2,
    agent_radius: f64,
    params: &RvoParams,
) -> Vec2 {
    let to_goal = obstacle.goal - obstacle.position;
    if to_goal.norm() < 0.05 || obstacle.preferred_speed <= 0.0 {
        return Vec2::ZERO;
    }
    let v_pref = to_goal.unit() * obstacle.preferred_speed;
    let clearance = obstacle.radius + agent_radius + params.margin;
    if !conflict(
        obstacle.position,
        v_pref,
        agent_pos,
        agent_vel,
        clearance,
        params.horizon,
    ) {
        return v_pref;
    }

    let base = v_pref.angle();
    let mut best: Option<(f64, Vec2)> = None;
    for dev in deviation_order(params) {
        let v_cand = Vec2::from_angle(base + dev) * obstacle.preferred_speed;
        let v_half = (v_pref + v_cand) * 0.5;
        let sep = min_separation(
            obstacle.position - agent_pos,
            v_half - agent_vel,
            params.horizon,
        );
        if sep >= clearance {
            return v_half;
        }
        if best.as_ref().map_or(true, |(s, _)| sep > *s) {
            best = Some((sep, v_half));
        }
    }
    best.expect("candidate list is nonempty").1
}

/// Constant velocity along the direction locked at spawn; ignores the agent.
pub fn noncooperative_velocity(obstacle: &ObstacleState) -> Vec2 {
    obstacle.spawn_direction * obstacle.preferred_speed
}

pub fn static_velocity() -> Vec2 {
    Vec2::ZERO
}
