//! The observe-act-train cycle.
//!
//! Episodes roll out under the variance-penalized selector; every step of an
//! episode is windowed into a training example carrying the episode's
//! terminal collision label; after each session of episodes every ensemble
//! member retrains on its own with-replacement resample of the full
//! experience set.

mod dataset;
pub mod toy1d;

pub use dataset::{ExperienceDataset, TrainingExample};

use crate::ensemble::{bootstrap_indices, Ensemble};
use crate::env::{self, Observation, ScenarioConfig};
use crate::error::{Error, Result};
use crate::features;
use crate::nn::{self, AdamState, SequenceBatch, SequenceExample};
use crate::policy::{
    self, lambda_v_schedule, CostWeights, DecisionContext, MotionPrimitive,
};
use crate::trace::{EpisodeTrace, TraceStep};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One executed step: the observation the policy saw and the action taken.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordStep {
    pub observation: Observation,
    pub action_index: usize,
    pub action_heading: f64,
}

/// The training unit: an episode's (observation, action) history plus its
/// terminal collision label.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<RecordStep>,
    pub collided: bool,
    pub reached_goal: bool,
    pub timed_out: bool,
}

impl EpisodeRecord {
    /// 1 iff the episode ended in a collision; goal and timeout are 0.
    pub fn label(&self) -> f64 {
        if self.collided {
            1.0
        } else {
            0.0
        }
    }
}

/// How `lambda_v` evolves while training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    /// Linear schedule advanced once per environment step.
    Scheduled,
    /// Fixed value for the whole run (0 trains the uncertainty-unaware
    /// baseline; 200 is the converged comparator).
    Constant { value: f64 },
}

/// Tracks the current variance penalty across episodes.
#[derive(Debug, Clone)]
pub struct LambdaTracker {
    mode: LambdaMode,
    weights: CostWeights,
    total_steps: usize,
    step: usize,
}

impl LambdaTracker {
    pub fn new(mode: LambdaMode, weights: CostWeights, total_steps: usize) -> Self {
        LambdaTracker {
            mode,
            weights,
            total_steps,
            step: 0,
        }
    }

    pub fn constant(value: f64) -> Self {
        LambdaTracker::new(
            LambdaMode::Constant { value },
            CostWeights::default(),
            1,
        )
    }

    pub fn value(&self) -> Result<f64> {
        match self.mode {
            LambdaMode::Constant { value } => Ok(value),
            LambdaMode::Scheduled => {
                lambda_v_schedule(&self.weights, self.step, self.total_steps)
            }
        }
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sessions: usize,
    pub episodes_per_session: usize,
    pub epochs_per_session: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Environment steps over which `lambda_v` sweeps its range; defaults to
    /// `sessions * episodes_per_session * 20` when absent.
    pub schedule_steps: Option<usize>,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
    pub ensemble: crate::ensemble::EnsembleConfig,
    pub weights: CostWeights,
    pub scenario: ScenarioConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sessions: 20,
            episodes_per_session: 50,
            epochs_per_session: 8,
            batch_size: 32,
            learning_rate: 1e-3,
            schedule_steps: None,
            lambda_mode: LambdaMode::Scheduled,
            seed: 0,
            ensemble: crate::ensemble::EnsembleConfig::default(),
            weights: CostWeights::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sessions == 0
            || self.episodes_per_session == 0
            || self.epochs_per_session == 0
            || self.batch_size == 0
        {
            return Err(Error::InvalidParameter(
                "sessions, episodes, epochs and batch_size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        self.ensemble.validate()?;
        self.weights.validate()?;
        self.scenario.validate()
    }

    pub fn schedule_total_steps(&self) -> usize {
        self.schedule_steps
            .unwrap_or(self.sessions * self.episodes_per_session * 20)
            .max(1)
    }
}

/// Per-session training metrics, one CSV row each.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMetrics {
    pub session: usize,
    pub episodes: usize,
    pub steps: usize,
    pub collisions: usize,
    pub collision_rate: f64,
    pub goal_rate: f64,
    pub timeout_rate: f64,
    pub mean_step_uncertainty: f64,
    pub lambda_v_end: f64,
    pub dataset_size: usize,
    pub mean_loss: f64,
}

pub fn metrics_csv_header() -> &'static str {
    "session,episodes,steps,collisions,collision_rate,goal_rate,timeout_rate,mean_step_uncertainty,lambda_v_end,dataset_size,mean_loss"
}

pub fn metrics_to_csv(metrics: &[SessionMetrics]) -> String {
    let mut out = String::from(metrics_csv_header());
    out.push('\n');
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.session,
            m.episodes,
            m.steps,
            m.collisions,
            m.collision_rate,
            m.goal_rate,
            m.timeout_rate,
            m.mean_step_uncertainty,
            m.lambda_v_end,
            m.dataset_size,
            m.mean_loss,
        );
    }
    out
}

/// Roll one episode to termination under the current policy.
///
/// Observations are perturbed per the scenario before the policy sees them;
/// the record stores what the policy saw, the trace stores ground truth
/// poses alongside the per-primitive prediction moments and costs.
pub fn run_episode(
    scenario: &ScenarioConfig,
    primitives: &[MotionPrimitive],
    weights: &CostWeights,
    ensemble: &Ensemble,
    lambda: &mut LambdaTracker,
    session: usize,
    episode: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(EpisodeRecord, EpisodeTrace)> {
    let (mut world, first_obs) = env::reset(scenario, rng)?;
    let mut seen = env::perturb_observation(&first_obs, &scenario.perturbation, rng);
    let mut observations: Vec<Observation> = vec![seen.clone()];
    let mut past_actions: Vec<f64> = Vec::new();
    let mut record_steps = Vec::new();
    let mut trace_steps = Vec::new();

    loop {
        let ctx = DecisionContext {
            observations: &observations,
            past_actions: &past_actions,
            agent_pos: world.agent.position,
            agent_heading: world.agent.heading,
            goal: world.agent.goal,
            dt: scenario.dt,
        };
        let lambda_v = lambda.value()?;
        let selection = policy::select_action(ensemble, &ctx, primitives, weights, lambda_v, rng)?;

        record_steps.push(RecordStep {
            observation: seen.clone(),
            action_index: selection.index,
            action_heading: selection.primitive.heading,
        });
        trace_steps.push(TraceStep {
            time: world.step_count as f64 * scenario.dt,
            agent_pos: world.agent.position,
            agent_heading: world.agent.heading,
            obstacle_pos: world.obstacle.position,
            action_index: selection.index,
            means: selection.distributions.iter().map(|d| d.mean).collect(),
            variances: selection.distributions.iter().map(|d| d.variance).collect(),
            costs: selection.costs.clone(),
        });

        let outcome = world.step(selection.primitive.heading, selection.primitive.speed);
        lambda.advance();
        if outcome.done {
            let record = EpisodeRecord {
                steps: record_steps,
                collided: outcome.collided,
                reached_goal: outcome.reached_goal,
                timed_out: outcome.timed_out && !outcome.collided && !outcome.reached_goal,
            };
            let trace = EpisodeTrace {
                session,
                episode,
                steps: trace_steps,
                collided: outcome.collided,
                reached_goal: outcome.reached_goal,
            };
            return Ok((record, trace));
        }
        seen = env::perturb_observation(&outcome.observation, &scenario.perturbation, rng);
        observations.push(seen.clone());
        past_actions.push(selection.primitive.heading);
    }
}

/// Slice an episode into per-step training windows.
///
/// Step `t` yields the most recent `min(t+1, history_len)` (observation,
/// action) rows; the final row carries the action evaluated at `t`. Every
/// window inherits the episode's terminal label, and windows never cross
/// episode boundaries.
pub fn windows_from_episode(record: &EpisodeRecord, history_len: usize) -> Vec<TrainingExample> {
    let label = record.label();
    let mut examples = Vec::with_capacity(record.steps.len());
    for t in 0..record.steps.len() {
        let start = (t + 1).saturating_sub(history_len);
        let features = record.steps[start..=t]
            .iter()
            .map(|s| features::encode_step(&s.observation, s.action_heading))
            .collect();
        examples.push(TrainingExample { features, label });
    }
    examples
}

impl ExperienceDataset {
    /// Window an episode and append all its examples.
    pub fn push_episode(&mut self, record: &EpisodeRecord) {
        self.examples
            .extend(windows_from_episode(record, self.history_len));
    }
}

pub(crate) fn train_member(
    member: &mut nn::NetworkParams,
    dataset: &ExperienceDataset,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    p_keep: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = bootstrap_indices(dataset.len(), &mut rng)?;
    let mut order: Vec<usize> = (0..indices.len()).collect();
    let mut adam = AdamState::new(member, learning_rate);
    let mut last_epoch_loss = 0.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch = SequenceBatch {
                examples: chunk
                    .iter()
                    .map(|&i| {
                        let ex = &dataset.examples[indices[i]];
                        SequenceExample {
                            features: ex.features.clone(),
                            valid_len: ex.features.len(),
                            label: ex.label,
                        }
                    })
                    .collect(),
            };
            let mask = nn::sample_dropout_mask(member, p_keep, &mut rng)?;
            let (grads, loss) = nn::backward_with_loss(member, &batch, &mask)?;
            nn::optimizer_step(member, &grads, &mut adam)?;
            loss_sum += loss;
            batches += 1;
        }
        last_epoch_loss = loss_sum / batches.max(1) as f64;
    }
    if !member.is_finite() {
        return Err(Error::NonFinite("network parameters after training".into()));
    }
    Ok(last_epoch_loss)
}

/// Retrain every member on its own bootstrap resample of `dataset`.
///
/// Members train in parallel on independent, pre-assigned substreams, so the
/// result is identical at any thread count. Returns the mean final-epoch
/// loss across members.
pub fn train_session(
    ensemble: &mut Ensemble,
    dataset: &ExperienceDataset,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("experience dataset".into()));
    }
    let p_keep = ensemble.config.p_keep;
    let member_seeds: Vec<u64> = (0..ensemble.members.len()).map(|_| rng.gen()).collect();
    let losses: Vec<Result<f64>> = ensemble
        .members
        .par_iter_mut()
        .zip(&member_seeds)
        .map(|(member, &seed)| {
            train_member(member, dataset, epochs, batch_size, learning_rate, p_keep, seed)
        })
        .collect();
    let mut total = 0.0;
    for loss in &losses {
        match loss {
            Ok(l) => total += l,
            Err(e) => return Err(Error::NonFinite(format!("member training failed: {e}"))),
        }
    }
    Ok(total / ensemble.members.len() as f64)
}

/// Everything `train_loop` produces.
#[derive(Debug)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    pub metrics: Vec<SessionMetrics>,
    pub dataset: ExperienceDataset,
}

/// The full observe-act-train cycle: `sessions x episodes` rollouts with
/// `lambda_v` advancing per environment step, ensemble retraining after each
/// session.
pub fn train_loop(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut ensemble = Ensemble::collision_predictor(
        config.ensemble,
        crate::rng::substream_seed(config.seed, "ensemble", 0),
    )?;
    let mut dataset = ExperienceDataset::new(config.ensemble.history_len);
    let primitives = policy::primitive_set_with(config.scenario.agent_speed, 1);
    let mut lambda = LambdaTracker::new(
        config.lambda_mode,
        config.weights,
        config.schedule_total_steps(),
    );
    let mut metrics = Vec::with_capacity(config.sessions);

    for session in 0..config.sessions {
        let mut steps = 0usize;
        let mut collisions = 0usize;
        let mut goals = 0usize;
        let mut timeouts = 0usize;
        let mut uncertainty_sum = 0.0;
        for episode in 0..config.episodes_per_session {
            let index = (session * config.episodes_per_session + episode) as u64;
            let mut rng = crate::rng::substream(config.seed, "episode", index);
            let (record, trace) = run_episode(
                &config.scenario,
                &primitives,
                &config.weights,
                &ensemble,
                &mut lambda,
                session,
                episode,
                &mut rng,
            )?;
            steps += record.steps.len();
            collisions += record.collided as usize;
            goals += record.reached_goal as usize;
            timeouts += record.timed_out as usize;
            uncertainty_sum += trace.step_uncertainties().sum::<f64>();
            dataset.push_episode(&record);
        }
        let mut session_rng = crate::rng::substream(config.seed, "train-session", session as u64);
        let mean_loss = train_session(
            &mut ensemble,
            &dataset,
            config.epochs_per_session,
            config.batch_size,
            config.learning_rate,
            &mut session_rng,
        )?;
        let n = config.episodes_per_session as f64;
        metrics.push(SessionMetrics {
            session,
            episodes: config.episodes_per_session,
            steps,
            collisions,
            collision_rate: collisions as f64 / n,
            goal_rate: goals as f64 / n,
            timeout_rate: timeouts as f64 / n,
            mean_step_uncertainty: uncertainty_sum / steps.max(1) as f64,
            lambda_v_end: lambda.value()?,
            dataset_size: dataset.len(),
            mean_loss,
        });
    }
    Ok(TrainOutcome {
        ensemble,
        metrics,
        dataset,
    })
}

#[cfg(test)]
mod tests;
