//! Observation/action encoding shared by training and prediction.
//!
//! A per-timestep feature row is the observation (ego-frame obstacle
//! kinematics, radius, relative goal, validity flags) concatenated with the
//! heading angle of the action evaluated at that step. Training windows and
//! prediction queries are assembled through the same functions so the
//! predictor always sees one layout.

use crate::env::Observation;

/// Width of one feature row.
pub const FEATURE_WIDTH: usize = 11;
/// Default observation-history length `l` (timesteps).
pub const DEFAULT_HISTORY_LEN: usize = 8;
/// Bumped whenever the row layout below changes.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Encode one step: `[pos.x, pos.y, vel.x, vel.y, radius, goal.x, goal.y,
/// position_valid, velocity_valid, frame_valid, action_heading]`.
pub fn encode_step(obs: &Observation, action_heading: f64) -> Vec<f64> {
    vec![
        obs.obstacle_position.x,
        obs.obstacle_position.y,
        obs.obstacle_velocity.x,
        obs.obstacle_velocity.y,
        obs.obstacle_radius,
        obs.relative_goal.x,
        obs.relative_goal.y,
        obs.position_valid as u8 as f64,
        obs.velocity_valid as u8 as f64,
        obs.frame_valid as u8 as f64,
        action_heading,
    ]
}

/// Feature sequence for a prediction query.
///
/// `observations` are the most recent frames, oldest first, current frame
/// last; `past_actions` pair with all but the current frame. The candidate
/// action fills the final row. Only the last `history_len` frames are kept.
pub fn query_window(
    observations: &[Observation],
    past_actions: &[f64],
    candidate_heading: f64,
    history_len: usize,
) -> (Vec<Vec<f64>>, usize) {
    debug_assert_eq!(observations.len(), past_actions.len() + 1);
    let keep = observations.len().min(history_len);
    let start = observations.len() - keep;
    let mut rows = Vec::with_capacity(keep);
    for idx in start..observations.len() {
        let heading = if idx + 1 == observations.len() {
            candidate_heading
        } else {
            past_actions[idx]
        };
        rows.push(encode_step(&observations[idx], heading));
    }
    (rows, keep)
}
