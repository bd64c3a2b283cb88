//! Online multi-target tracking by divide and conquer.
//!
//! Each frame is split into zones by correlation clustering on a learned
//! track/detection affinity. Simple zones (one track, one detection) use
//! spatial features only; complex zones add appearance and motion cues. A
//! single augmented assignment solves every zone at once, and the weights are
//! learned with a latent structural SVM optimized by block-coordinate
//! Frank-Wolfe.

pub mod assign;
pub mod cli;
pub mod cluster;
pub mod featcost;
pub mod io;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod track;

pub use assign::{Cost, CostMatrix, MatchResult};
pub use model::{Detection, Track, WeightVector, ZonePartition};

/// Double-precision Kalman state used by the tracker.
pub type Kalman = track::kalman::KalmanState<f64>;
pub type KalmanParams = track::kalman::KalmanParams<f64>;
pub type CostMatrixF64 = assign::CostMatrix<f64>;
pub type AffinityF64 = cluster::DenseAffinity<f64>;
