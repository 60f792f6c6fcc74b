//! 1D regional-novelty experiment.
//!
//! An agent at the origin picks a heading in `[-pi/2, pi/2]`; a disc
//! obstacle sits at a fixed distance at a 1D bearing. A small
//! fully-connected ensemble with MC-Dropout and bootstrapping is trained to
//! predict the analytic collision label — but only from obstacles on the
//! right-hand side (bearing > 0). Evaluating the trained ensemble on a grid
//! covering both sides shows low variance and accurate labels where data was
//! dense, and regionally increased variance on the unseen left side.
//!
//! Angles are measured from the +y axis, so positive bearings sit at x > 0.

use super::{train_member, ExperienceDataset, TrainingExample};
use crate::ensemble::{predict_window, Ensemble, EnsembleConfig};
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy1dConfig {
    pub train_examples: usize,
    /// Distance from the agent to the obstacle disc centre, metres.
    pub obstacle_distance: f64,
    /// Agent radius + obstacle radius, metres.
    pub radius_sum: f64,
    /// Grid points per axis for evaluation.
    pub grid_resolution: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub members: usize,
    pub passes: usize,
    pub p_keep: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for Toy1dConfig {
    fn default() -> Self {
        Toy1dConfig {
            train_examples: 2000,
            obstacle_distance: 2.0,
            radius_sum: 0.6,
            grid_resolution: 41,
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            members: 5,
            passes: 20,
            p_keep: 0.7,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

impl Toy1dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_examples == 0 || self.grid_resolution < 2 {
            return Err(Error::InvalidParameter(
                "train_examples must be > 0 and grid_resolution >= 2".into(),
            ));
        }
        if self.obstacle_distance <= self.radius_sum {
            return Err(Error::InvalidParameter(
                "obstacle_distance must exceed radius_sum".into(),
            ));
        }
        if self.hidden.is_empty() {
            return Err(Error::InvalidParameter("need at least one hidden layer".into()));
        }
        Ok(())
    }
}

/// Analytic collision oracle: does the heading ray pass within `radius_sum`
/// of a disc centre at `distance` along `bearing`? Both angles from +y.
pub fn collision_label_1d(
    agent_heading: f64,
    obstacle_bearing: f64,
    distance: f64,
    radius_sum: f64,
) -> bool {
    let gamma = agent_heading - obstacle_bearing;
    gamma.cos() > 0.0 && distance * gamma.sin().abs() < radius_sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct Toy1dPoint {
    pub agent_heading: f64,
    pub obstacle_bearing: f64,
    pub mean: f64,
    pub variance: f64,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct Toy1dResult {
    pub grid: Vec<Toy1dPoint>,
    /// Classification accuracy against the analytic oracle, bearing > 0.
    pub trained_side_accuracy: f64,
    pub trained_side_mean_variance: f64,
    pub unseen_side_mean_variance: f64,
}

impl Toy1dResult {
    pub fn variance_ratio(&self) -> f64 {
        self.unseen_side_mean_variance / self.trained_side_mean_variance.max(1e-12)
    }
}

pub fn grid_csv_header() -> &'static str {
    "agent_heading,obstacle_bearing,mean,variance,label"
}

pub fn grid_to_csv(result: &Toy1dResult) -> String {
    let mut out = String::from(grid_csv_header());
    out.push('\n');
    for p in &result.grid {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.agent_heading,
            p.obstacle_bearing,
            p.mean,
            p.variance,
            p.label as u8
        );
    }
    out
}

/// Train on right-side obstacles only, then sweep the full grid.
pub fn run_toy1d(config: &Toy1dConfig) -> Result<Toy1dResult> {
    config.validate()?;
    let ensemble_config = EnsembleConfig {
        members: config.members,
        passes: config.passes,
        p_keep: config.p_keep,
        hidden_size: config.hidden[0],
        history_len: 1,
    };
    let spec = NetworkSpec::mlp_predictor(2, &config.hidden);
    let mut ensemble = Ensemble::init(
        &spec,
        ensemble_config,
        crate::rng::substream_seed(config.seed, "toy-ensemble", 0),
    )?;

    // Right-side training set: bearings in (0, pi/2), headings anywhere.
    let mut data_rng = crate::rng::substream(config.seed, "toy-data", 0);
    let mut dataset = ExperienceDataset::new(1);
    for _ in 0..config.train_examples {
        let heading = data_rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
        let bearing = data_rng.gen_range(0.0..FRAC_PI_2);
        let label = collision_label_1d(
            heading,
            bearing,
            config.obstacle_distance,
            config.radius_sum,
        );
        dataset.examples.push(TrainingExample {
            features: vec![vec![heading, bearing]],
            label: label as u8 as f64,
        });
    }

    let mut train_rng = crate::rng::substream(config.seed, "toy-train", 0);
    let member_seeds: Vec<u64> =
        (0..ensemble.members.len()).map(|_| train_rng.gen()).collect();
    let results: Vec<Result<f64>> = ensemble
        .members
        .par_iter_mut()
        .zip(&member_seeds)
        .map(|(member, &seed)| {
            train_member(
                member,
                &dataset,
                config.epochs,
                config.batch_size,
                config.learning_rate,
                config.p_keep,
                seed,
            )
        })
        .collect();
    for r in results {
        r?;
    }

    // Evaluate both half-planes on an even grid.
    let res = config.grid_resolution;
    let coord = |i: usize| -FRAC_PI_2 + std::f64::consts::PI * i as f64 / (res - 1) as f64;
    let mut eval_rng = crate::rng::substream(config.seed, "toy-eval", 0);
    let cells: Vec<(f64, f64, u64)> = (0..res)
        .flat_map(|hi| (0..res).map(move |bi| (hi, bi)))
        .map(|(hi, bi)| (coord(hi), coord(bi), eval_rng.gen::<u64>()))
        .collect();
    let grid: Vec<Toy1dPoint> = cells
        .par_iter()
        .map(|&(heading, bearing, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = predict_window(&ensemble, &[vec![heading, bearing]], 1, &mut rng)?;
            Ok(Toy1dPoint {
                agent_heading: heading,
                obstacle_bearing: bearing,
                mean: dist.mean,
                variance: dist.variance,
                label: collision_label_1d(
                    heading,
                    bearing,
                    config.obstacle_distance,
                    config.radius_sum,
                ),
            })
        })
        .collect::<Result<_>>()?;

    let mut trained_correct = 0usize;
    let mut trained_count = 0usize;
    let mut trained_var = 0.0;
    let mut unseen_count = 0usize;
    let mut unseen_var = 0.0;
    for p in &grid {
        if p.obstacle_bearing > 1e-9 {
            trained_count += 1;
            trained_var += p.variance;
            if (p.mean >= 0.5) == p.label {
                trained_correct += 1;
            }
        } else if p.obstacle_bearing < -1e-9 {
            unseen_count += 1;
            unseen_var += p.variance;
        }
    }
    Ok(Toy1dResult {
        grid,
        trained_side_accuracy: trained_correct as f64 / trained_count.max(1) as f64,
        trained_side_mean_variance: trained_var / trained_count.max(1) as f64,
        unseen_side_mean_variance: unseen_var / unseen_count.max(1) as f64,
    })
}
