//! Evaluation against trusted scores and per-bin deviation statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{DebiasError, Result};
use crate::graph::{bin_of, RatingGraph};
use crate::scalar::Scalar;
use crate::solver::SolverResult;
use crate::ScoreMap;

/// Mean squared difference over items present in both maps.
pub fn mse<T: Scalar>(predicted: &ScoreMap<T>, truth: &ScoreMap<T>) -> Result<T> {
    let common = intersect(predicted, truth);
    if common.is_empty() {
        return Err(DebiasError::InsufficientOverlap { needed: 1, found: 0 });
    }
    let sum = common
        .iter()
        .fold(T::zero(), |acc, (_, p, t)| acc + (*p - *t) * (*p - *t));
    Ok(sum / T::of_count(common.len()))
}

/// Footrule distance between two rankings of the common items: mean
/// `|rank_pred(j) - rank_truth(j)|`. Both maps are ranked by descending score,
/// ties broken by ascending item id.
pub fn rank_error<T: Scalar>(predicted: &ScoreMap<T>, truth: &ScoreMap<T>) -> Result<T> {
    let displacement = rank_displacement(predicted, truth)?;
    let total: usize = displacement.values().sum();
    Ok(T::of_count(total) / T::of_count(displacement.len()))
}

/// Per-item `|rank_pred - rank_truth|` over the common items.
pub fn rank_displacement<T: Scalar>(
    predicted: &ScoreMap<T>,
    truth: &ScoreMap<T>,
) -> Result<BTreeMap<String, usize>> {
    let common = intersect(predicted, truth);
    if common.len() < 2 {
        return Err(DebiasError::InsufficientOverlap {
            needed: 2,
            found: common.len(),
        });
    }
    let pred_rank = ranks(common.iter().map(|(id, p, _)| (*id, *p)));
    let truth_rank = ranks(common.iter().map(|(id, _, t)| (*id, *t)));
    Ok(common
        .iter()
        .map(|(id, _, _)| {
            let d = pred_rank[id].abs_diff(truth_rank[id]);
            ((*id).to_owned(), d)
        })
        .collect())
}

fn ranks<'a, T: Scalar>(scores: impl Iterator<Item = (&'a str, T)>) -> HashMap<&'a str, usize> {
    let mut v: Vec<(&str, T)> = scores.collect();
    v.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    v.into_iter().enumerate().map(|(k, (id, _))| (id, k)).collect()
}

fn intersect<'a, T: Scalar>(a: &'a ScoreMap<T>, b: &'a ScoreMap<T>) -> Vec<(&'a str, T, T)> {
    a.iter()
        .filter_map(|(id, &x)| b.get(id).map(|&y| (id.as_str(), x, y)))
        .collect()
}

/// Deviation of true ratings from mean ratings within one rating-count bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinDeviation<T> {
    /// Items in the bin.
    pub items: usize,
    /// Mean `|r_j - meanRating_j|`.
    pub bindev: T,
    /// Mean `|r_j - meanRating_j| / r_j` over items with `r_j > 0`.
    pub relbindev: T,
    /// Items left out of `relbindev` because `r_j = 0`.
    pub zero_rating_items: usize,
}

pub fn bin_deviation<T: Scalar>(
    graph: &RatingGraph<T>,
    result: &SolverResult<T>,
) -> Result<BTreeMap<usize, BinDeviation<T>>> {
    bin_deviation_of_ratings(graph, &result.true_rating)
}

/// Bins without items are omitted.
pub fn bin_deviation_of_ratings<T: Scalar>(
    graph: &RatingGraph<T>,
    ratings: &[T],
) -> Result<BTreeMap<usize, BinDeviation<T>>> {
    if ratings.len() != graph.num_items() {
        return Err(DebiasError::LengthMismatch {
            expected: graph.num_items(),
            actual: ratings.len(),
        });
    }
    let means = graph.mean_ratings();
    // (items, sum dev, sum rel dev, rel terms, zero items)
    let mut acc: BTreeMap<usize, (usize, T, T, usize, usize)> = BTreeMap::new();
    for (j, (&r, &m)) in ratings.iter().zip(&means).enumerate() {
        let bin = bin_of(graph.item_degree(j))?;
        let slot = acc.entry(bin).or_insert((0, T::zero(), T::zero(), 0, 0));
        let dev = (r - m).abs();
        slot.0 += 1;
        slot.1 = slot.1 + dev;
        if r > T::zero() {
            slot.2 = slot.2 + dev / r;
            slot.3 += 1;
        } else {
            slot.4 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(bin, (items, dev, rel, rel_terms, zeros))| {
            let relbindev = if rel_terms > 0 {
                rel / T::of_count(rel_terms)
            } else {
                T::zero()
            };
            (
                bin,
                BinDeviation {
                    items,
                    bindev: dev / T::of_count(items),
                    relbindev,
                    zero_rating_items: zeros,
                },
            )
        })
        .collect())
}

/// Fixed-width bucket counts over `[lo, hi]`. Values outside the range land
/// in the end buckets; NaNs are rejected.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn histogram<T: Scalar>(values: &[T], bucket_width: T, lo: T, hi: T) -> Result<Vec<usize>> {
    if !(bucket_width > T::zero() && bucket_width.is_finite()) {
        return Err(DebiasError::InvalidHistogram(format!(
            "bucket width must be positive, got {bucket_width}"
        )));
    }
    if !(hi > lo) {
        return Err(DebiasError::InvalidHistogram(format!("empty range [{lo}, {hi}]")));
    }
    let span = ((hi - lo) / bucket_width).as_f64();
    let buckets = ((span - 1e-9).ceil() as usize).max(1);
    let mut counts = vec![0usize; buckets];
    for &v in values {
        if v.is_nan() {
            return Err(DebiasError::InvalidHistogram("NaN value".into()));
        }
        let pos = ((v - lo) / bucket_width).floor().as_f64();
        let k = if pos < 0.0 { 0 } else { (pos as usize).min(buckets - 1) };
        counts[k] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub buckets: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HistogramSpec {
    pub fn bias_default() -> Self {
        Self {
            buckets: 40,
            lo: -1.0,
            hi: 1.0,
        }
    }

    pub fn rating_default() -> Self {
        Self {
            buckets: 20,
            lo: 0.0,
            hi: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.buckets as f64
    }

    pub fn apply<T: Scalar>(&self, values: &[T]) -> Result<Histogram> {
        let counts = histogram(values, T::of(self.width()), T::of(self.lo), T::of(self.hi))?;
        Ok(Histogram {
            lo: self.lo,
            hi: self.hi,
            width: self.width(),
            counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

/// Everything computed for one rating method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub method_label: String,
    /// Items scored by the method that also have a ground-truth score.
    pub evaluated_items: usize,
    pub mse_overall: T,
    pub mse_per_bin: BTreeMap<usize, T>,
    pub rank_error_overall: T,
    pub rank_error_per_bin: BTreeMap<usize, T>,
    pub bin_deviation: BTreeMap<usize, BinDeviation<T>>,
    pub bias_histogram: Option<Histogram>,
    pub rating_histogram: Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub bias_histogram: HistogramSpec,
    pub rating_histogram: HistogramSpec,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            bias_histogram: HistogramSpec::bias_default(),
            rating_histogram: HistogramSpec::rating_default(),
        }
    }
}

/// Scores a per-item rating vector (and optional per-user bias) against
/// `truth`. Per-bin metrics group items by their rating count in `graph`.
pub fn evaluate<T: Scalar>(
    method_label: impl Into<String>,
    graph: &RatingGraph<T>,
    ratings: &[T],
    bias: Option<&[T]>,
    truth: &ScoreMap<T>,
    settings: &EvalSettings,
) -> Result<EvalReport<T>> {
    let predicted = graph.item_scores(ratings)?;
    let mse_overall = mse(&predicted, truth)?;
    let displacement = rank_displacement(&predicted, truth)?;
    let rank_error_overall = rank_error(&predicted, truth)?;

    let mut sq: BTreeMap<usize, (T, usize)> = BTreeMap::new();
    let mut rank: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (id, &p) in &predicted {
        let Some(&t) = truth.get(id) else { continue };
        let j = graph.item_index(id).expect("predicted ids come from the graph");
        let bin = bin_of(graph.item_degree(j))?;
        let s = sq.entry(bin).or_insert((T::zero(), 0));
        s.0 = s.0 + (p - t) * (p - t);
        s.1 += 1;
        let r = rank.entry(bin).or_insert((0, 0));
        r.0 += displacement[id];
        r.1 += 1;
    }

    Ok(EvalReport {
        method_label: method_label.into(),
        evaluated_items: displacement.len(),
        mse_overall,
        mse_per_bin: sq
            .into_iter()
            .map(|(b, (s, n))| (b, s / T::of_count(n)))
            .collect(),
        rank_error_overall,
        rank_error_per_bin: rank
            .into_iter()
            .map(|(b, (s, n))| (b, T::of_count(s) / T::of_count(n)))
            .collect(),
        bin_deviation: bin_deviation_of_ratings(graph, ratings)?,
        bias_histogram: bias.map(|b| settings.bias_histogram.apply(b)).transpose()?,
        rating_histogram: settings.rating_histogram.apply(ratings)?,
    })
}

impl<T: Scalar> EvalReport<T> {
    /// Long-format per-bin table: `bin,metric,value`.
    pub fn write_bins_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin,metric,value")?;
        let mut bins: Vec<usize> = self
            .mse_per_bin
            .keys()
            .chain(self.bin_deviation.keys())
            .copied()
            .collect();
        bins.sort_unstable();
        bins.dedup();
        for bin in bins {
            if let Some(v) = self.mse_per_bin.get(&bin) {
                writeln!(out, "{bin},mse,{v:.9}")?;
            }
            if let Some(v) = self.rank_error_per_bin.get(&bin) {
                writeln!(out, "{bin},rank_error,{v:.9}")?;
            }
            if let Some(d) = self.bin_deviation.get(&bin) {
                writeln!(out, "{bin},items,{}", d.items)?;
                writeln!(out, "{bin},bindev,{:.9}", d.bindev)?;
                writeln!(out, "{bin},relbindev,{:.9}", d.relbindev)?;
            }
        }
        Ok(())
    }
}
