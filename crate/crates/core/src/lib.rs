//! Uncertainty-aware dynamic collision avoidance.
//!
//! A simulation and learning library built around three pieces:
//!
//! - bootstrapped ensembles of dropout-sampled recurrent collision
//!   predictors ([`nn`], [`ensemble`]),
//! - a model-predictive action selector that penalizes predictive variance
//!   with an adaptive schedule ([`policy`]),
//! - a 2D dynamic-obstacle world with observation perturbations for novelty
//!   scenarios, plus training and evaluation harnesses ([`env`], [`trainer`],
//!   [`eval`]).

pub mod ensemble;
pub mod env;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod trace;
pub mod trainer;

pub use error::{Error, Result};
