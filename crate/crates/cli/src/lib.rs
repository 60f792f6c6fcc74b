//! Command implementations behind the `warynav` binary.
//!
//! Workflows are wired from one strict JSON run config (unknown keys are
//! rejected) with a single root seed. Every command echoes its effective
//! config into the output directory and writes nothing outside it.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric failure.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use warynav_core::ensemble::{load_ensemble, save_ensemble, Ensemble, EnsembleConfig};
use warynav_core::env::ScenarioConfig;
use warynav_core::error::Error as CoreError;
use warynav_core::eval::{
    evaluate_model, format_report_table, reports_to_csv, EvalConfig, ScenarioReport,
};
use warynav_core::policy::{validate_weights, CostWeights, WeightsCheck};
use warynav_core::trace::write_traces_csv;
use warynav_core::trainer::toy1d::{grid_to_csv, run_toy1d, Toy1dConfig};
use warynav_core::trainer::{
    metrics_to_csv, train_loop, LambdaMode, SessionMetrics, TrainConfig,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Command failure carrying its process exit code.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Io(_) => EXIT_IO,
            AppError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Io(m) | AppError::Numeric(m) => m,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config error: {m}"),
            AppError::Io(m) => write!(f, "io error: {m}"),
            AppError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<CoreError> for AppError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::NonFinite(_) => AppError::Numeric(err.to_string()),
            CoreError::Io(_) | CoreError::Checkpoint(_) | CoreError::DatasetFile(_) => {
                AppError::Io(err.to_string())
            }
            _ => AppError::Config(err.to_string()),
        }
    }
}

/// Trainer knobs that are independent of the shared env/ensemble/weights
/// sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub sessions: usize,
    pub episodes_per_session: usize,
    pub epochs_per_session: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule_steps: Option<usize>,
    pub lambda_mode: LambdaMode,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainerSection {
            sessions: d.sessions,
            episodes_per_session: d.episodes_per_session,
            epochs_per_session: d.epochs_per_session,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            schedule_steps: d.schedule_steps,
            lambda_mode: d.lambda_mode,
        }
    }
}

/// One run config file drives every workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub env: ScenarioConfig,
    pub ensemble: EnsembleConfig,
    pub weights: CostWeights,
    pub trainer: TrainerSection,
    pub eval: EvalConfig,
    pub toy1d: Toy1dConfig,
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            sessions: self.trainer.sessions,
            episodes_per_session: self.trainer.episodes_per_session,
            epochs_per_session: self.trainer.epochs_per_session,
            batch_size: self.trainer.batch_size,
            learning_rate: self.trainer.learning_rate,
            schedule_steps: self.trainer.schedule_steps,
            lambda_mode: self.trainer.lambda_mode,
            seed: self.seed,
            ensemble: self.ensemble,
            weights: self.weights,
            scenario: self.env.clone(),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub full_scale: bool,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if overrides.full_scale {
        config.eval = config.eval.clone().full_scale();
    }
    if config.output_dir.as_os_str().is_empty() {
        return Err(AppError::Config("output_dir must not be empty".into()));
    }
    Ok(config)
}

fn prepare_output_dir(config: &RunConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| AppError::Io(format!("{}: {e}", config.output_dir.display())))?;
    let echo = serde_json::to_string_pretty(config)
        .map_err(|e| AppError::Io(format!("serialize config echo: {e}")))?;
    write_text(&config.output_dir.join("config.json"), &echo)
}

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

fn warn_on_weight_imbalance(config: &RunConfig) {
    // Rough upper bound on expected time-to-goal: twice the straight-line
    // time, covering detours.
    let max_t_goal = 2.0 * config.env.goal_distance / config.env.agent_speed;
    if let WeightsCheck::Warning(msg) = validate_weights(&config.weights, max_t_goal) {
        eprintln!("warning: {msg}");
    }
}

fn write_metrics(
    metrics: &[SessionMetrics],
    dir: &Path,
    file: &str,
) -> Result<(), AppError> {
    write_text(&dir.join(file), &metrics_to_csv(metrics))
}

/// Train an ensemble and write `checkpoint/`, `metrics.csv`, `dataset.bin`
/// and the config echo under the output directory.
pub fn cmd_train(config_path: &Path, overrides: &Overrides) -> Result<(), AppError> {
    let config = load_config(config_path, overrides)?;
    prepare_output_dir(&config)?;
    warn_on_weight_imbalance(&config);

    let train_config = config.train_config();
    let outcome = train_loop(&train_config)?;
    save_ensemble(&outcome.ensemble, &config.output_dir.join("checkpoint"))?;
    write_metrics(&outcome.metrics, &config.output_dir, "metrics.csv")?;
    outcome
        .dataset
        .save(&config.output_dir.join("dataset.bin"))?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "trained {} sessions x {} episodes; final collision rate {:.3}, dataset {} examples",
            train_config.sessions,
            train_config.episodes_per_session,
            last.collision_rate,
            last.dataset_size
        );
    }
    Ok(())
}

fn load_checked_ensemble(dir: &Path) -> Result<Ensemble, AppError> {
    load_ensemble(dir).map_err(AppError::from)
}

/// Evaluate a frozen checkpoint across the configured novelty scenarios and
/// write `report.csv` plus per-scenario trace files.
pub fn cmd_evaluate(
    config_path: &Path,
    checkpoint: &Path,
    overrides: &Overrides,
) -> Result<(), AppError> {
    let config = load_config(config_path, overrides)?;
    let ensemble = load_checked_ensemble(checkpoint)?;
    prepare_output_dir(&config)?;

    let outcome = evaluate_model(
        &ensemble,
        &config.env,
        &config.eval,
        config.eval.lambda_v,
        "model",
        config.seed,
    )?;
    write_text(
        &config.output_dir.join("report.csv"),
        &reports_to_csv(&outcome.reports),
    )?;
    for (kind, traces) in &outcome.traces {
        write_traces_csv(
            traces,
            &config.output_dir.join(format!("traces_{}.csv", kind.name())),
        )?;
    }
    print!("{}", format_report_table(&outcome.reports));
    Ok(())
}

/// Train the uncertainty-aware model and the unaware baseline (variance
/// penalty zero), then evaluate both across all scenarios.
pub fn cmd_compare(
    config_path: &Path,
    checkpoint: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), AppError> {
    let config = load_config(config_path, overrides)?;
    prepare_output_dir(&config)?;
    warn_on_weight_imbalance(&config);

    let (aware, unaware) = match checkpoint {
        Some(dir) => (
            load_checked_ensemble(&dir.join("aware"))?,
            load_checked_ensemble(&dir.join("unaware"))?,
        ),
        None => {
            let aware_cfg = config.train_config();
            let unaware_cfg = TrainConfig {
                lambda_mode: LambdaMode::Constant { value: 0.0 },
                ..aware_cfg.clone()
            };
            let aware = train_loop(&aware_cfg)?;
            let unaware = train_loop(&unaware_cfg)?;
            save_ensemble(&aware.ensemble, &config.output_dir.join("aware"))?;
            save_ensemble(&unaware.ensemble, &config.output_dir.join("unaware"))?;
            write_metrics(&aware.metrics, &config.output_dir, "aware_metrics.csv")?;
            write_metrics(&unaware.metrics, &config.output_dir, "unaware_metrics.csv")?;
            (aware.ensemble, unaware.ensemble)
        }
    };

    let reports = warynav_core::eval::compare_models(
        &aware,
        &unaware,
        &config.env,
        &config.eval,
        config.seed,
    )?;
    write_text(
        &config.output_dir.join("compare.csv"),
        &reports_to_csv(&reports),
    )?;
    print!("{}", format_report_table(&reports));
    Ok(())
}

/// Run the 1D regional-novelty experiment and write the evaluation grid and
/// a summary.
pub fn cmd_toy1d(config_path: &Path, overrides: &Overrides) -> Result<(), AppError> {
    let config = load_config(config_path, overrides)?;
    prepare_output_dir(&config)?;
    let mut toy = config.toy1d.clone();
    toy.seed = config.seed;
    let result = run_toy1d(&toy)?;
    write_text(
        &config.output_dir.join("toy1d_grid.csv"),
        &grid_to_csv(&result),
    )?;
    let summary = serde_json::json!({
        "trained_side_accuracy": result.trained_side_accuracy,
        "trained_side_mean_variance": result.trained_side_mean_variance,
        "unseen_side_mean_variance": result.unseen_side_mean_variance,
        "variance_ratio": result.variance_ratio(),
    });
    write_text(
        &config.output_dir.join("toy1d_summary.json"),
        &serde_json::to_string_pretty(&summary)
            .map_err(|e| AppError::Io(format!("summary: {e}")))?,
    )?;
    println!(
        "toy1d: trained-side accuracy {:.3}, variance ratio (unseen/trained) {:.2}",
        result.trained_side_accuracy,
        result.variance_ratio()
    );
    Ok(())
}

/// Reports keyed by (model, scenario) for programmatic checks.
pub fn report_map(reports: &[ScenarioReport]) -> std::collections::BTreeMap<(String, String), ScenarioReport> {
    reports
        .iter()
        .map(|r| ((r.model.clone(), r.scenario.clone()), r.clone()))
        .collect()
}
