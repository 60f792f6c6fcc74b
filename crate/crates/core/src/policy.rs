//! Motion primitives and the variance-penalized model-predictive selector.
//!
//! Every step, all 11 primitives are scored with
//! `lambda_v * Var + lambda_c * E + lambda_g * t_goal` and the argmin-cost
//! primitive is executed for one step before re-planning. The cost is
//! deliberately velocity-independent: the variance term is not multiplied by
//! the selected speed, so uncertain regions are avoided in the ground plane
//! rather than by slowing down.
//!
//! `lambda_v` follows a linear schedule from -50000 (uncertainty-seeking,
//! exploration) to 200 (uncertainty-averse) over the training horizon and is
//! clamped at 200 afterwards.

use crate::ensemble::{predict_distribution, Ensemble, PredictionDistribution};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of discrete motion primitives.
pub const PRIMITIVE_COUNT: usize = 11;
/// Half-width of the heading fan, radians.
pub const MAX_HEADING: f64 = std::f64::consts::FRAC_PI_6;

/// A heading-angle action held for `horizon` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    /// Heading change relative to the current agent heading, radians.
    pub heading: f64,
    /// Steps the primitive spans.
    pub horizon: usize,
    /// Commanded speed, m/s.
    pub speed: f64,
}

/// The 11 primitives, headings evenly spaced over `[-pi/6, pi/6]` inclusive,
/// ordered by angle; index 5 is straight ahead.
pub fn primitive_set() -> Vec<MotionPrimitive> {
    primitive_set_with(1.0, 1)
}

pub fn primitive_set_with(speed: f64, horizon: usize) -> Vec<MotionPrimitive> {
    let spacing = 2.0 * MAX_HEADING / (PRIMITIVE_COUNT - 1) as f64;
    let center = (PRIMITIVE_COUNT - 1) / 2;
    // Built symmetrically around zero so mirrored headings have bit-equal
    // magnitudes and the |heading| tie-break is exact.
    (0..PRIMITIVE_COUNT)
        .map(|i| MotionPrimitive {
            heading: (i as f64 - center as f64) * spacing,
            horizon,
            speed,
        })
        .collect()
}

/// Cost weights and the `lambda_v` schedule endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub lambda_c: f64,
    pub lambda_g: f64,
    pub lambda_v_start: f64,
    pub lambda_v_end: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            lambda_c: 25.0,
            lambda_g: 2.0,
            lambda_v_start: -50_000.0,
            lambda_v_end: 200.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_c <= 0.0 || self.lambda_g <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda_c and lambda_g must be > 0, got {} and {}",
                self.lambda_c, self.lambda_g
            )));
        }
        Ok(())
    }
}

/// Linear `lambda_v` interpolation: start at step 0, end at `total_steps`,
/// clamped at the end value for any later step.
pub fn lambda_v_schedule(weights: &CostWeights, step: usize, total_steps: usize) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidParameter(
            "schedule total_steps must be > 0".into(),
        ));
    }
    if step >= total_steps {
        return Ok(weights.lambda_v_end);
    }
    let fraction = step as f64 / total_steps as f64;
    Ok(weights.lambda_v_start + (weights.lambda_v_end - weights.lambda_v_start) * fraction)
}

/// Straight-line time to goal from the primitive's endpoint.
pub fn time_to_goal(
    primitive: &MotionPrimitive,
    agent_pos: Vec2,
    agent_heading: f64,
    goal: Vec2,
    dt: f64,
) -> Result<f64> {
    if primitive.speed <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "primitive speed must be > 0, got {}",
            primitive.speed
        )));
    }
    let direction = Vec2::from_angle(agent_heading + primitive.heading);
    let endpoint = agent_pos + direction * (primitive.speed * dt * primitive.horizon as f64);
    Ok(endpoint.dist(goal) / primitive.speed)
}

/// Joint MPC cost of one primitive.
pub fn joint_cost(
    mean: f64,
    variance: f64,
    t_goal: f64,
    weights: &CostWeights,
    lambda_v: f64,
) -> f64 {
    lambda_v * variance + weights.lambda_c * mean + weights.lambda_g * t_goal
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightsCheck {
    Ok,
    /// The goal term can dominate a certain-collision cost.
    Warning(String),
}

/// Soft-constraint check: warn when `lambda_g * max_expected_t_goal` can
/// reach `lambda_c`, i.e. when reaching the goal may outweigh a predicted
/// certain collision.
pub fn validate_weights(weights: &CostWeights, max_expected_t_goal: f64) -> WeightsCheck {
    let goal_cost = weights.lambda_g * max_expected_t_goal;
    if goal_cost >= weights.lambda_c {
        WeightsCheck::Warning(format!(
            "goal cost can reach {goal_cost:.3} >= lambda_c = {:.3}; \
             a certain collision may not dominate the goal term",
            weights.lambda_c
        ))
    } else {
        WeightsCheck::Ok
    }
}

/// Everything the selector needs to know about the current decision point.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    /// Recent observations, oldest first, current frame last.
    pub observations: &'a [Observation],
    /// Actions paired with all but the current observation.
    pub past_actions: &'a [f64],
    pub agent_pos: Vec2,
    pub agent_heading: f64,
    pub goal: Vec2,
    pub dt: f64,
}

/// Outcome of one MPC evaluation over the primitive set.
#[derive(Debug, Clone)]
pub struct ActionSelection {
    pub index: usize,
    pub primitive: MotionPrimitive,
    pub distributions: Vec<PredictionDistribution>,
    pub costs: Vec<f64>,
    pub t_goals: Vec<f64>,
    pub lambda_v: f64,
}

/// Pick the best index under the joint cost. Ties break toward the smaller
/// absolute heading, then the lower index.
pub fn argmin_cost(costs: &[f64], primitives: &[MotionPrimitive]) -> usize {
    let mut best = 0;
    for i in 1..costs.len() {
        let better = costs[i] < costs[best]
            || (costs[i] == costs[best]
                && primitives[i].heading.abs() < primitives[best].heading.abs());
        if better {
            best = i;
        }
    }
    best
}

/// Evaluate every primitive through the ensemble and return the joint-cost
/// argmin. Per-primitive prediction substreams are drawn from `rng` up
/// front, so concurrent evaluation matches the sequential result exactly.
pub fn select_action(
    ensemble: &Ensemble,
    ctx: &DecisionContext<'_>,
    primitives: &[MotionPrimitive],
    weights: &CostWeights,
    lambda_v: f64,
    rng: &mut impl Rng,
) -> Result<ActionSelection> {
    if ensemble.members.is_empty() {
        return Err(Error::Empty("ensemble".into()));
    }
    if primitives.is_empty() {
        return Err(Error::Empty("primitive set".into()));
    }
    let seeds: Vec<u64> = (0..primitives.len()).map(|_| rng.gen()).collect();
    let distributions: Vec<PredictionDistribution> = primitives
        .par_iter()
        .zip(&seeds)
        .map(|(primitive, &seed)| {
            let mut sub = ChaCha8Rng::seed_from_u64(seed);
            predict_distribution(
                ensemble,
                ctx.observations,
                ctx.past_actions,
                primitive.heading,
                &mut sub,
            )
        })
        .collect::<Result<_>>()?;

    let mut t_goals = Vec::with_capacity(primitives.len());
    let mut costs = Vec::with_capacity(primitives.len());
    for (primitive, dist) in primitives.iter().zip(&distributions) {
        let t_goal = time_to_goal(primitive, ctx.agent_pos, ctx.agent_heading, ctx.goal, ctx.dt)?;
        t_goals.push(t_goal);
        costs.push(joint_cost(dist.mean, dist.variance, t_goal, weights, lambda_v));
    }
    let index = argmin_cost(&costs, primitives);
    Ok(ActionSelection {
        index,
        primitive: primitives[index],
        distributions,
        costs,
        t_goals,
        lambda_v,
    })
}
