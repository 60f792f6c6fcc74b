//! Bootstrapped ensemble of dropout networks.
//!
//! `n_b` independently initialized members are trained on with-replacement
//! resamples of the experience set. At prediction time each member runs
//! `n_d` stochastic dropout forward passes, giving `N = n_b * n_d`
//! collision-probability samples per query whose spread estimates model
//! uncertainty. Members evaluate concurrently; per-member RNG substreams are
//! pre-assigned so results are identical at any thread count, with samples
//! ordered member-major.

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::features;
use crate::nn::{self, NetworkParams, NetworkSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Bootstrapped member count `n_b`.
    pub members: usize,
    /// Dropout passes per member `n_d`.
    pub passes: usize,
    /// Keep probability of each dropout unit.
    pub p_keep: f64,
    /// LSTM hidden width of each member.
    pub hidden_size: usize,
    /// Observation-history length `l` fed to the predictor.
    pub history_len: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 5,
            passes: 20,
            p_keep: 0.7,
            hidden_size: nn::DEFAULT_HIDDEN_SIZE,
            history_len: features::DEFAULT_HISTORY_LEN,
        }
    }
}

impl EnsembleConfig {
    pub fn total_passes(&self) -> usize {
        self.members * self.passes
    }

    pub fn validate(&self) -> Result<()> {
        if self.members == 0 || self.passes == 0 {
            return Err(Error::InvalidParameter(
                "ensemble needs members >= 1 and passes >= 1".into(),
            ));
        }
        if !(self.p_keep > 0.0 && self.p_keep <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p_keep must be in (0, 1], got {}",
                self.p_keep
            )));
        }
        if self.hidden_size == 0 || self.history_len == 0 {
            return Err(Error::InvalidParameter(
                "hidden_size and history_len must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `N` per-query collision-probability samples with their first two moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Population variance (divide by N) over the samples.
    pub variance: f64,
}

impl PredictionDistribution {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        // All-equal samples must report exactly zero variance; the summed
        // mean can otherwise pick up a rounding ulp.
        if samples.windows(2).all(|w| w[0] == w[1]) {
            let mean = samples.first().copied().unwrap_or(0.0);
            return PredictionDistribution {
                samples,
                mean,
                variance: 0.0,
            };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let variance = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        PredictionDistribution {
            samples,
            mean,
            variance,
        }
    }
}

/// The bootstrapped set of collision predictors.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<NetworkParams>,
    pub config: EnsembleConfig,
}

impl Ensemble {
    /// Randomly initialize `members` networks of identical shape from
    /// per-member substreams of `seed`.
    pub fn init(spec: &NetworkSpec, config: EnsembleConfig, seed: u64) -> Result<Ensemble> {
        config.validate()?;
        let members = (0..config.members)
            .map(|m| {
                nn::init_params(spec, crate::rng::substream_seed(seed, "member-init", m as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble { members, config })
    }

    /// Collision-predictor ensemble over the standard feature layout.
    pub fn collision_predictor(config: EnsembleConfig, seed: u64) -> Result<Ensemble> {
        let spec = NetworkSpec::lstm_predictor(features::FEATURE_WIDTH, config.hidden_size);
        Ensemble::init(&spec, config, seed)
    }
}

/// Draw `len` indices uniformly with replacement.
pub fn bootstrap_indices(len: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    Ok((0..len).map(|_| rng.gen_range(0..len)).collect())
}

/// With-replacement resample of the same cardinality as the source.
pub fn bootstrap_resample<T: Clone>(dataset: &[T], rng: &mut impl Rng) -> Result<Vec<T>> {
    let indices = bootstrap_indices(dataset.len(), rng)?;
    Ok(indices.into_iter().map(|i| dataset[i].clone()).collect())
}

/// Sample the full prediction distribution for one motion-primitive query.
///
/// Runs `n_d` dropout passes in each of the `n_b` members over the feature
/// window built from the histories and the candidate action. Per-member mask
/// streams are seeded from `rng` up front, so the sample list (member-major
/// order) is independent of evaluation concurrency.
pub fn predict_distribution(
    ensemble: &Ensemble,
    observations: &[Observation],
    past_actions: &[f64],
    candidate_heading: f64,
    rng: &mut impl Rng,
) -> Result<PredictionDistribution> {
    if ensemble.members.is_empty() {
        return Err(Error::Empty("ensemble".into()));
    }
    if observations.is_empty() || observations.len() != past_actions.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "need n observations and n-1 past actions, got {} and {}",
            observations.len(),
            past_actions.len()
        )));
    }
    let (window, valid_len) = features::query_window(
        observations,
        past_actions,
        candidate_heading,
        ensemble.config.history_len,
    );
    predict_window(ensemble, &window, valid_len, rng)
}

/// Same sampling protocol as [`predict_distribution`], but over an already
/// assembled feature window.
pub fn predict_window(
    ensemble: &Ensemble,
    window: &[Vec<f64>],
    valid_len: usize,
    rng: &mut impl Rng,
) -> Result<PredictionDistribution> {
    if ensemble.members.is_empty() {
        return Err(Error::Empty("ensemble".into()));
    }
    let cfg = &ensemble.config;
    let member_seeds: Vec<u64> = (0..ensemble.members.len()).map(|_| rng.gen()).collect();

    let per_member: Vec<Result<Vec<f64>>> = ensemble
        .members
        .par_iter()
        .zip(&member_seeds)
        .map(|(member, &seed)| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples = Vec::with_capacity(cfg.passes);
            for _ in 0..cfg.passes {
                let mask = nn::sample_dropout_mask(member, cfg.p_keep, &mut mask_rng)?;
                samples.push(nn::forward(member, window, valid_len, &mask)?);
            }
            Ok(samples)
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.total_passes());
    for member_samples in per_member {
        samples.extend(member_samples?);
    }
    Ok(PredictionDistribution::from_samples(samples))
}

/// Per-step uncertainty: the summed prediction variance over all primitives.
pub fn per_step_uncertainty(distributions: &[PredictionDistribution]) -> f64 {
    distributions.iter().map(|d| d.variance).sum()
}

const ENSEMBLE_FORMAT: &str = "warynav-ensemble";
const ENSEMBLE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleManifest {
    format: String,
    version: u32,
    feature_layout_version: u32,
    config: EnsembleConfig,
    member_files: Vec<String>,
}

/// Write the ensemble as one directory: a manifest plus one checkpoint per
/// member.
pub fn save_ensemble(ensemble: &Ensemble, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut member_files = Vec::new();
    for (m, member) in ensemble.members.iter().enumerate() {
        let file = format!("member_{m:03}.json");
        nn::save_params(member, &dir.join(&file))?;
        member_files.push(file);
    }
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT.to_string(),
        version: ENSEMBLE_VERSION,
        feature_layout_version: features::FEATURE_LAYOUT_VERSION,
        config: ensemble.config,
        member_files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<Ensemble> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != ENSEMBLE_FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: unknown format {:?}",
            manifest_path.display(),
            manifest.format
        )));
    }
    if manifest.version != ENSEMBLE_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {}",
            manifest_path.display(),
            manifest.version
        )));
    }
    if manifest.feature_layout_version != features::FEATURE_LAYOUT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: feature layout {} does not match this build ({})",
            manifest_path.display(),
            manifest.feature_layout_version,
            features::FEATURE_LAYOUT_VERSION
        )));
    }
    manifest.config.validate()?;
    if manifest.member_files.len() != manifest.config.members {
        return Err(Error::Checkpoint(format!(
            "{}: manifest lists {} member files but config declares {}",
            manifest_path.display(),
            manifest.member_files.len(),
            manifest.config.members
        )));
    }
    let mut members = Vec::with_capacity(manifest.member_files.len());
    for file in &manifest.member_files {
        members.push(nn::load_params(&dir.join(file))?);
    }
    if let Some(first) = members.first() {
        if members.iter().any(|m| m.spec != first.spec) {
            return Err(Error::Checkpoint(format!(
                "{}: member network shapes disagree",
                manifest_path.display()
            )));
        }
    }
    Ok(Ensemble {
        members,
        config: manifest.config,
    })
}
