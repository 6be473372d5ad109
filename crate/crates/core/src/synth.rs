//! Planted-bias instance generator.
//!
//! Every user gets a hidden bias `b*` and every item a hidden quality `r*`,
//! both drawn uniformly from their ranges. Each (user, item) pair is rated
//! independently with probability `density`, observing
//! `clamp01(r*_j + b*_i + noise)` with Gaussian noise.

use rand::distr::{Bernoulli, Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{DebiasError, Result};
use crate::graph::{Edge, RatingGraph};
use crate::scalar::Scalar;
use crate::solver::SolverResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_users: usize,
    pub num_items: usize,
    pub density: f64,
    pub bias_range: (f64, f64),
    pub quality_range: (f64, f64),
    pub noise_sigma: f64,
    pub seed: u64,
    /// Redraws allowed when a draw leaves some user or item without ratings.
    pub max_retries: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_users: 50,
            num_items: 50,
            density: 0.3,
            bias_range: (-0.1, 0.1),
            quality_range: (0.2, 0.8),
            noise_sigma: 0.0,
            seed: 0,
            max_retries: 100,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DebiasError::InvalidSynthParams(msg));
        if self.num_users == 0 || self.num_items == 0 {
            return bad("need at least one user and one item".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        let (blo, bhi) = self.bias_range;
        if !(blo <= bhi && blo >= -1.0 && bhi <= 1.0) {
            return bad(format!("bias range [{blo}, {bhi}] not inside [-1, 1]"));
        }
        let (qlo, qhi) = self.quality_range;
        if !(qlo <= qhi && qlo >= 0.0 && qhi <= 1.0) {
            return bad(format!("quality range [{qlo}, {qhi}] not inside [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        Ok(())
    }

    /// True when no observed weight can fall outside `[0, 1]` before
    /// clamping: noise-free and `quality_range + bias_range` inside `[0, 1]`.
    pub fn weights_unclamped(&self) -> bool {
        self.noise_sigma == 0.0
            && self.quality_range.0 + self.bias_range.0 >= 0.0
            && self.quality_range.1 + self.bias_range.1 <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct PlantedInstance<T> {
    pub graph: RatingGraph<T>,
    pub planted_bias: Vec<T>,
    pub planted_quality: Vec<T>,
    pub params: SynthParams,
    /// Number of edge-set draws used, including the accepted one.
    pub attempts: usize,
}

pub fn generate<T: Scalar>(params: &SynthParams) -> Result<PlantedInstance<T>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bias_dist = Uniform::new_inclusive(params.bias_range.0, params.bias_range.1)
        .map_err(|e| DebiasError::InvalidSynthParams(e.to_string()))?;
    let quality_dist = Uniform::new_inclusive(params.quality_range.0, params.quality_range.1)
        .map_err(|e| DebiasError::InvalidSynthParams(e.to_string()))?;
    let planted_bias: Vec<f64> = (0..params.num_users).map(|_| bias_dist.sample(&mut rng)).collect();
    let planted_quality: Vec<f64> =
        (0..params.num_items).map(|_| quality_dist.sample(&mut rng)).collect();

    let coin = Bernoulli::new(params.density)
        .map_err(|e| DebiasError::InvalidSynthParams(e.to_string()))?;
    let mut attempts = 0;
    let pairs = loop {
        if attempts > params.max_retries {
            return Err(DebiasError::RetryBudgetExhausted(attempts));
        }
        attempts += 1;
        let mut user_deg = vec![0usize; params.num_users];
        let mut item_deg = vec![0usize; params.num_items];
        let mut pairs = Vec::new();
        for (u, ud) in user_deg.iter_mut().enumerate() {
            for (i, id) in item_deg.iter_mut().enumerate() {
                if coin.sample(&mut rng) {
                    *ud += 1;
                    *id += 1;
                    pairs.push((u, i));
                }
            }
        }
        if user_deg.iter().chain(&item_deg).all(|&d| d > 0) {
            break pairs;
        }
    };

    let noise = Normal::new(0.0, params.noise_sigma)
        .map_err(|e| DebiasError::InvalidSynthParams(e.to_string()))?;
    let edges = pairs
        .into_iter()
        .map(|(user, item)| {
            let eps = if params.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let w = (planted_quality[item] + planted_bias[user] + eps).clamp(0.0, 1.0);
            Edge {
                user,
                item,
                weight: T::of(w),
            }
        })
        .collect();

    let graph = RatingGraph::from_labeled_edges(
        (0..params.num_users).map(|u| format!("u{u}")).collect(),
        (0..params.num_items).map(|i| format!("i{i}")).collect(),
        edges,
    )?;
    Ok(PlantedInstance {
        graph,
        planted_bias: planted_bias.into_iter().map(T::of).collect(),
        planted_quality: planted_quality.into_iter().map(T::of).collect(),
        params: params.clone(),
        attempts,
    })
}

/// Max-norm recovery errors after removing the global shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryError<T> {
    /// `max_i |b_i - (b*_i - mean b*)|`
    pub bias: T,
    /// `max_j |r_j - (r*_j + mean b*)|`
    pub rating: T,
}

impl<T: Scalar> PlantedInstance<T> {
    pub fn mean_planted_bias(&self) -> T {
        crate::scalar::mean(&self.planted_bias).unwrap_or_else(T::zero)
    }

    /// Planted values moved into the gauge the solver converges to.
    pub fn shift_adjusted(&self) -> (Vec<T>, Vec<T>) {
        let shift = self.mean_planted_bias();
        (
            self.planted_bias.iter().map(|&b| b - shift).collect(),
            self.planted_quality.iter().map(|&r| r + shift).collect(),
        )
    }

    pub fn recovery_error(&self, result: &SolverResult<T>) -> RecoveryError<T> {
        let (bias, rating) = self.shift_adjusted();
        RecoveryError {
            bias: crate::scalar::linf_distance(&result.bias, &bias),
            rating: crate::scalar::linf_distance(&result.true_rating, &rating),
        }
    }

    /// Planted quality keyed by item id, for use as ground truth.
    pub fn quality_scores(&self) -> crate::ScoreMap<T> {
        self.graph
            .item_scores(&self.planted_quality)
            .expect("one quality per item")
    }
}
