//! Scenario evaluation harness.
//!
//! Rolls a frozen ensemble through novelty scenarios (clean, Gaussian noise,
//! dropped frames, masked velocity, masked position), aggregates per-step
//! uncertainty and collision rates from the logged traces, and compares an
//! uncertainty-aware policy against the unaware baseline. Aggregation is a
//! pure function of traces: nothing is re-simulated.

use crate::ensemble::Ensemble;
use crate::env::{Perturbation, ScenarioConfig};
use crate::error::{Error, Result};
use crate::policy::{self, CostWeights};
use crate::trace::EpisodeTrace;
use crate::trainer::{run_episode, LambdaTracker};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// The novelty scenarios of the evaluation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    None,
    Noise,
    Drop,
    MaskVel,
    MaskPos,
}

impl ScenarioKind {
    pub fn all() -> [ScenarioKind; 5] {
        [
            ScenarioKind::None,
            ScenarioKind::Noise,
            ScenarioKind::Drop,
            ScenarioKind::MaskVel,
            ScenarioKind::MaskPos,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::None => "none",
            ScenarioKind::Noise => "noise",
            ScenarioKind::Drop => "drop",
            ScenarioKind::MaskVel => "mask_vel",
            ScenarioKind::MaskPos => "mask_pos",
        }
    }

    pub fn perturbation(&self) -> Perturbation {
        match self {
            ScenarioKind::None => Perturbation::None,
            ScenarioKind::Noise => Perturbation::GaussianNoise {
                sigma: Perturbation::DEFAULT_SIGMA,
            },
            ScenarioKind::Drop => Perturbation::Drop {
                p_drop: Perturbation::DEFAULT_P_DROP,
            },
            ScenarioKind::MaskVel => Perturbation::MaskVelocity,
            ScenarioKind::MaskPos => Perturbation::MaskPosition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Independent episode batches; statistics spread is reported across them.
    pub sessions: usize,
    /// Episodes per session per scenario.
    pub episodes: usize,
    pub scenarios: Vec<ScenarioKind>,
    /// Variance penalty used while evaluating (the converged value).
    pub lambda_v: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sessions: 5,
            episodes: 20,
            scenarios: ScenarioKind::all().to_vec(),
            lambda_v: 200.0,
        }
    }
}

impl EvalConfig {
    /// Paper-scale sweep: 20 sessions of 50 episodes.
    pub fn full_scale(mut self) -> Self {
        self.sessions = 20;
        self.episodes = 50;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions == 0 || self.episodes == 0 || self.scenarios.is_empty() {
            return Err(Error::InvalidParameter(
                "eval needs sessions, episodes and at least one scenario".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub model: String,
    pub scenario: String,
    pub unc_mean: f64,
    pub unc_std: f64,
    pub collision_rate: f64,
    pub episodes: usize,
    pub sessions: usize,
}

/// Mean and across-session spread of the per-step uncertainty.
///
/// Within a session, all steps of all episodes pool into one mean of the
/// summed per-primitive variance; the returned pair is the mean and
/// population standard deviation of those per-session values.
pub fn aggregate_uncertainty(traces: &[EpisodeTrace]) -> Result<(f64, f64)> {
    if traces.is_empty() {
        return Err(Error::Empty("traces".into()));
    }
    let mut per_session: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for trace in traces {
        let entry = per_session.entry(trace.session).or_insert((0.0, 0));
        for u in trace.step_uncertainties() {
            entry.0 += u;
            entry.1 += 1;
        }
    }
    let session_means: Vec<f64> = per_session
        .values()
        .map(|(sum, count)| sum / (*count).max(1) as f64)
        .collect();
    let n = session_means.len() as f64;
    let mean = session_means.iter().sum::<f64>() / n;
    let var = session_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / n;
    Ok((mean, var.sqrt()))
}

/// Collided episodes over total episodes.
pub fn collision_rate(traces: &[EpisodeTrace]) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::Empty("traces".into()));
    }
    let collided = traces.iter().filter(|t| t.collided).count();
    Ok(collided as f64 / traces.len() as f64)
}

/// Roll `sessions x episodes` evaluation episodes of one scenario with
/// frozen weights and a fixed variance penalty.
///
/// Episodes run concurrently; each owns the substream
/// `(seed, "eval/<model>/<scenario>", session * episodes + episode)`, so the
/// trace set is identical at any thread count.
pub fn rollout_scenario(
    ensemble: &Ensemble,
    base: &ScenarioConfig,
    kind: ScenarioKind,
    config: &EvalConfig,
    lambda_v: f64,
    model: &str,
    seed: u64,
) -> Result<Vec<EpisodeTrace>> {
    config.validate()?;
    let scenario = ScenarioConfig {
        perturbation: kind.perturbation(),
        ..base.clone()
    };
    scenario.validate()?;
    let primitives = policy::primitive_set_with(scenario.agent_speed, 1);
    let weights = CostWeights::default();
    let label = format!("eval/{model}/{}", kind.name());
    let jobs: Vec<(usize, usize)> = (0..config.sessions)
        .flat_map(|s| (0..config.episodes).map(move |e| (s, e)))
        .collect();
    jobs.par_iter()
        .map(|&(session, episode)| {
            let index = (session * config.episodes + episode) as u64;
            let mut rng = crate::rng::substream(seed, &label, index);
            let mut lambda = LambdaTracker::constant(lambda_v);
            let (_, trace) = run_episode(
                &scenario,
                &primitives,
                &weights,
                ensemble,
                &mut lambda,
                session,
                episode,
                &mut rng,
            )?;
            Ok(trace)
        })
        .collect()
}

/// Traces grouped per scenario, plus the assembled report rows.
#[derive(Debug)]
pub struct EvalOutcome {
    pub reports: Vec<ScenarioReport>,
    pub traces: Vec<(ScenarioKind, Vec<EpisodeTrace>)>,
}

/// Sweep one frozen model over every configured scenario.
pub fn evaluate_model(
    ensemble: &Ensemble,
    base: &ScenarioConfig,
    config: &EvalConfig,
    lambda_v: f64,
    model: &str,
    seed: u64,
) -> Result<EvalOutcome> {
    config.validate()?;
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    for &kind in &config.scenarios {
        let scenario_traces =
            rollout_scenario(ensemble, base, kind, config, lambda_v, model, seed)?;
        let (unc_mean, unc_std) = aggregate_uncertainty(&scenario_traces)?;
        reports.push(ScenarioReport {
            model: model.to_string(),
            scenario: kind.name().to_string(),
            unc_mean,
            unc_std,
            collision_rate: collision_rate(&scenario_traces)?,
            episodes: config.sessions * config.episodes,
            sessions: config.sessions,
        });
        traces.push((kind, scenario_traces));
    }
    Ok(EvalOutcome { reports, traces })
}

/// Evaluate the uncertainty-aware model (variance penalty held at
/// `config.lambda_v`) against the unaware baseline (penalty zero) under
/// every scenario. One report row per (model, scenario).
pub fn compare_models(
    aware: &Ensemble,
    unaware: &Ensemble,
    base: &ScenarioConfig,
    config: &EvalConfig,
    seed: u64,
) -> Result<Vec<ScenarioReport>> {
    let mut reports =
        evaluate_model(aware, base, config, config.lambda_v, "aware", seed)?.reports;
    reports.extend(evaluate_model(unaware, base, config, 0.0, "unaware", seed)?.reports);
    Ok(reports)
}

pub fn report_csv_header() -> &'static str {
    "model,scenario,unc_mean,unc_std,collision_rate,episodes,sessions"
}

pub fn reports_to_csv(reports: &[ScenarioReport]) -> String {
    let mut out = String::from(report_csv_header());
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.scenario, r.unc_mean, r.unc_std, r.collision_rate, r.episodes, r.sessions
        );
    }
    out
}

/// Fixed-width table for standard output.
pub fn format_report_table(reports: &[ScenarioReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<10} {:>12} {:>12} {:>16} {:>10} {:>10}",
        "model", "scenario", "unc_mean", "unc_std", "collision_rate", "episodes", "sessions"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>12.4} {:>12.4} {:>16.4} {:>10} {:>10}",
            r.model, r.scenario, r.unc_mean, r.unc_std, r.collision_rate, r.episodes, r.sessions
        );
    }
    out
}
