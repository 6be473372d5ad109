//! Mutually recursive bias / true-rating fixed-point iteration.
//!
//! Each sweep is synchronous: every item rating for step `t + 1` is computed
//! from the step-`t` biases, then every user bias is computed from those new
//! ratings.
//!
//! ```text
//! r_j <- mean_{i rated j} clamp01(w_ij - alpha_i * b_i)
//! b_i <- mean_{j rated by i} (w_ij - r_j)
//! ```
//!
//! With `alpha_i <= alpha < 1` the bias map is an `alpha`-contraction in the
//! max norm, so the iteration converges to a unique fixed point from any
//! starting bias in `[-1, 1]`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DebiasError, Result};
use crate::graph::RatingGraph;
use crate::scalar::{l1_distance, linf_distance, Scalar};

/// `max(0, min(1, w - alpha * bias))`
#[inline]
pub fn debias_weight<T: Scalar>(weight: T, alpha: T, bias: T) -> T {
    (weight - alpha * bias).min(T::one()).max(T::zero())
}

/// Smallest `t` with `2 * alpha^t <= epsilon`, i.e. `ceil(log_{1/alpha}(2 / epsilon))`,
/// floored at zero.
pub fn iterations_needed<T: Scalar>(alpha: T, epsilon: T) -> Result<usize> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(DebiasError::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(DebiasError::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let two = T::one() + T::one();
    let t = (two / epsilon).ln() / alpha.recip().ln();
    if t <= T::zero() {
        return Ok(0);
    }
    Ok(t.ceil().to_usize().unwrap_or(usize::MAX))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialBias<T> {
    Zeros,
    Constant(T),
    Explicit(Vec<T>),
}

impl<T: Scalar> InitialBias<T> {
    pub fn materialize(&self, num_users: usize) -> Result<Vec<T>> {
        let values = match self {
            InitialBias::Zeros => vec![T::zero(); num_users],
            InitialBias::Constant(c) => vec![*c; num_users],
            InitialBias::Explicit(v) => {
                if v.len() != num_users {
                    return Err(DebiasError::LengthMismatch {
                        expected: num_users,
                        actual: v.len(),
                    });
                }
                v.clone()
            }
        };
        check_bias_range(&values)?;
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Global damping factor in `[0, 1)`.
    pub alpha: T,
    /// Per-user damping keyed by dense user index, each in `[0, alpha]`.
    pub alpha_overrides: BTreeMap<usize, T>,
    /// Stop once the L1 norm of the bias change drops below this.
    pub epsilon: T,
    pub max_iterations: usize,
    pub initial_bias: InitialBias<T>,
    /// Worker threads for the per-node sweeps; 1 runs inline.
    pub threads: usize,
}

impl<T: Scalar> SolverConfig<T> {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    /// Zero seed, `epsilon = 1e-6`, and enough iterations for the max-norm
    /// bias change to fall below epsilon.
    pub fn new(alpha: T) -> Self {
        let epsilon = T::of(Self::DEFAULT_EPSILON);
        let max_iterations = iterations_needed(alpha, epsilon)
            .map(|t| t.max(1))
            .unwrap_or(2);
        Self {
            alpha,
            alpha_overrides: BTreeMap::new(),
            epsilon,
            max_iterations,
            initial_bias: InitialBias::Zeros,
            threads: 1,
        }
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_initial_bias(mut self, initial_bias: InitialBias<T>) -> Self {
        self.initial_bias = initial_bias;
        self
    }

    pub fn with_override(mut self, user: usize, alpha: T) -> Self {
        self.alpha_overrides.insert(user, alpha);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(DebiasError::InvalidConfig(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        for (&user, &a) in &self.alpha_overrides {
            if !(a >= T::zero() && a <= self.alpha) {
                return Err(DebiasError::InvalidConfig(format!(
                    "alpha override {a} for user {user} must lie in [0, {}]",
                    self.alpha
                )));
            }
        }
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(DebiasError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.threads == 0 {
            return Err(DebiasError::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Damping factor of every user after applying overrides.
    pub fn effective_alphas(&self, num_users: usize) -> Result<Vec<T>> {
        let mut alphas = vec![self.alpha; num_users];
        for (&user, &a) in &self.alpha_overrides {
            let slot = alphas.get_mut(user).ok_or_else(|| {
                DebiasError::InvalidConfig(format!(
                    "alpha override for user {user} but graph has {num_users} users"
                ))
            })?;
            *slot = a;
        }
        Ok(alphas)
    }
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub l1_bias_delta: T,
    pub linf_bias_delta: T,
    /// `None` on the first iteration, which has no previous rating vector.
    pub l1_rating_delta: Option<T>,
    /// Edges whose debiased weight hit the clamp during this sweep.
    #[serde(skip)]
    pub clamped_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult<T> {
    pub bias: Vec<T>,
    pub true_rating: Vec<T>,
    pub trace: Vec<IterationRecord<T>>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Whether any debiased weight was clamped to 0 or 1 at any point. The
    /// linear-system oracle only describes runs where this is false.
    pub clamp_fired: bool,
}

/// One synchronous sweep from `bias` to `(ratings, next_bias)`.
pub fn iterate_once<T: Scalar>(
    graph: &RatingGraph<T>,
    bias: &[T],
    config: &SolverConfig<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    config.validate()?;
    if bias.len() != graph.num_users() {
        return Err(DebiasError::LengthMismatch {
            expected: graph.num_users(),
            actual: bias.len(),
        });
    }
    check_bias_range(bias)?;
    let alphas = config.effective_alphas(graph.num_users())?;
    let sweep = Sweep::new(graph, &alphas, config.threads)?;
    let mut ratings = vec![T::zero(); graph.num_items()];
    let mut next = vec![T::zero(); graph.num_users()];
    sweep.ratings_from_bias(bias, &mut ratings);
    sweep.bias_from_ratings(&ratings, &mut next);
    Ok((ratings, next))
}

/// Iterates until the L1 bias change falls below `epsilon` or
/// `max_iterations` sweeps have run.
pub fn solve<T: Scalar>(graph: &RatingGraph<T>, config: &SolverConfig<T>) -> Result<SolverResult<T>> {
    config.validate()?;
    let alphas = config.effective_alphas(graph.num_users())?;
    let sweep = Sweep::new(graph, &alphas, config.threads)?;

    let mut bias = config.initial_bias.materialize(graph.num_users())?;
    let mut next_bias = vec![T::zero(); graph.num_users()];
    let mut ratings = vec![T::zero(); graph.num_items()];
    let mut prev_ratings = vec![T::zero(); graph.num_items()];
    let mut trace = Vec::new();
    let mut converged = false;

    if config.max_iterations == 0 {
        let clamped = sweep.ratings_from_bias(&bias, &mut ratings);
        return Ok(SolverResult {
            bias,
            true_rating: ratings,
            trace,
            iterations_run: 0,
            converged,
            clamp_fired: clamped > 0,
        });
    }

    let mut clamp_fired = false;
    for iter in 1..=config.max_iterations {
        std::mem::swap(&mut ratings, &mut prev_ratings);
        let clamped_edges = sweep.ratings_from_bias(&bias, &mut ratings);
        sweep.bias_from_ratings(&ratings, &mut next_bias);
        clamp_fired |= clamped_edges > 0;

        let l1_bias_delta = l1_distance(&next_bias, &bias);
        trace.push(IterationRecord {
            iter,
            l1_bias_delta,
            linf_bias_delta: linf_distance(&next_bias, &bias),
            l1_rating_delta: (iter > 1).then(|| l1_distance(&ratings, &prev_ratings)),
            clamped_edges,
        });
        std::mem::swap(&mut bias, &mut next_bias);
        if l1_bias_delta < config.epsilon {
            converged = true;
            break;
        }
    }

    Ok(SolverResult {
        bias,
        true_rating: ratings,
        iterations_run: trace.len(),
        trace,
        converged,
        clamp_fired,
    })
}

fn check_bias_range<T: Scalar>(bias: &[T]) -> Result<()> {
    if let Some((i, b)) = bias
        .iter()
        .enumerate()
        .find(|(_, &b)| !(b >= -T::one() && b <= T::one()))
    {
        return Err(DebiasError::InvalidConfig(format!(
            "bias of user {i} is {b}, outside [-1, 1]"
        )));
    }
    Ok(())
}

struct Sweep<'a, T> {
    graph: &'a RatingGraph<T>,
    alphas: &'a [T],
    pool: Option<rayon::ThreadPool>,
}

impl<'a, T: Scalar> Sweep<'a, T> {
    fn new(graph: &'a RatingGraph<T>, alphas: &'a [T], threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| DebiasError::InvalidConfig(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { graph, alphas, pool })
    }

    /// Returns the number of clamped edges.
    fn ratings_from_bias(&self, bias: &[T], ratings: &mut [T]) -> usize {
        let rate = |j: usize, slot: &mut T| -> usize {
            let (users, weights) = self.graph.item_ratings(j);
            let mut sum = T::zero();
            let mut clamped = 0;
            for (&i, &w) in users.iter().zip(weights) {
                let raw = w - self.alphas[i] * bias[i];
                if raw < T::zero() || raw > T::one() {
                    clamped += 1;
                }
                sum = sum + raw.min(T::one()).max(T::zero());
            }
            *slot = sum / T::of_count(users.len());
            clamped
        };
        match &self.pool {
            None => ratings.iter_mut().enumerate().map(|(j, r)| rate(j, r)).sum(),
            Some(pool) => pool.install(|| {
                ratings
                    .par_iter_mut()
                    .enumerate()
                    .map(|(j, r)| rate(j, r))
                    .sum()
            }),
        }
    }

    fn bias_from_ratings(&self, ratings: &[T], bias: &mut [T]) {
        let deviate = |i: usize, slot: &mut T| {
            let (items, weights) = self.graph.user_ratings(i);
            let mut sum = T::zero();
            for (&j, &w) in items.iter().zip(weights) {
                sum = sum + (w - ratings[j]);
            }
            *slot = sum / T::of_count(items.len());
        };
        match &self.pool {
            None => bias.iter_mut().enumerate().for_each(|(i, b)| deviate(i, b)),
            Some(pool) => pool.install(|| {
                bias.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, b)| deviate(i, b))
            }),
        }
    }
}
