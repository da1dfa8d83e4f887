//! Event-based scheduling of state transmissions over a costly channel, with a
//! learned remote estimator that reads information out of silence.
//!
//! The numerical core is generic over the scalar type ([`Scalar`]); the aliases
//! at the bottom of this file fix it to `f64`, which is what the CLI uses.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod rollout;
pub mod scalar;
pub mod scheduler;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
pub use estimator::{EstimatorNet, EstimatorState, LinearEstimator};
pub use eval::{EvalReport, EvalSettings, SchedulePolicy};
pub use nn::{AdamConfig, Checkpoint, Mlp, OptimizerState};
pub use rollout::{simulate, CostSpec, Scheduler, TrajectoryRecord};
pub use scalar::{LinalgScalar, Scalar};
pub use scheduler::{PolicyNet, PpoConfig, ValueNet};
pub use systems::{GmmParams, GmmSpec, SystemKind, SystemModel};
pub use training::{alternating_train, TrainConfig};

pub type Mlp64 = nn::Mlp<f64>;
pub type PolicyNet64 = scheduler::PolicyNet<f64>;
pub type ValueNet64 = scheduler::ValueNet<f64>;
pub type EstimatorNet64 = estimator::EstimatorNet<f64>;
pub type GmmSpec64 = systems::GmmSpec<f64>;
pub type SystemModel64 = systems::SystemModel<f64>;
pub type CostSpec64 = rollout::CostSpec<f64>;
pub type SchedulePolicy64 = eval::SchedulePolicy<f64>;
pub type TrajectoryRecord64 = rollout::TrajectoryRecord<f64>;
