//! Removal of per-user rating bias on bipartite user -> item rating graphs.
//!
//! A user's bias is the mean amount by which their ratings exceed the items'
//! true ratings; an item's true rating is the mean of its ratings after each
//! has been shifted by a damped, clamped share of its rater's bias. The two
//! quantities are solved jointly by fixed-point iteration ([`solver`]), with
//! a dense direct solve of the unclamped system as a cross-check
//! ([`oracle`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod oracle;
pub mod output;
pub mod scalar;
pub mod solver;
pub mod synth;

use std::collections::BTreeMap;

pub use error::{DebiasError, Result};
pub use eval::{bin_deviation, evaluate, histogram, mse, rank_error, EvalReport, EvalSettings};
pub use graph::{bin_of, degree_histogram, Edge, RatingScale, NUM_BINS};
pub use ingest::{ingest_ground_truth, ingest_ratings, DelimitedFormat, DuplicatePolicy, IngestOptions, TruthFormat};
pub use oracle::{build_dense, solve_linear};
pub use scalar::Scalar;
pub use solver::{debias_weight, iterate_once, iterations_needed, solve, InitialBias};
pub use synth::{generate, SynthParams};

/// Scores keyed by external item id.
pub type ScoreMap<T> = BTreeMap<String, T>;

pub type RatingGraph = graph::RatingGraph<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolverResult = solver::SolverResult<f64>;
pub type GroundTruth = ingest::GroundTruth<f64>;
pub type PlantedInstance = synth::PlantedInstance<f64>;
pub type DenseSystem = oracle::DenseSystem<f64>;

pub type RatingGraphF32 = graph::RatingGraph<f32>;
pub type SolverConfigF32 = solver::SolverConfig<f32>;
pub type SolverResultF32 = solver::SolverResult<f32>;
