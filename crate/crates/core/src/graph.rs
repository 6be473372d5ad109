//! Bipartite user -> item rating graph.
//!
//! Edges are kept in insertion order and additionally indexed twice in
//! compressed sparse row form: once per user (the items it rated) and once
//! per item (the users that rated it). Within each adjacency slice neighbours
//! are sorted by dense index, so every per-node reduction runs in a fixed
//! order regardless of how the edges were supplied.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{DebiasError, Result};
use crate::scalar::Scalar;

/// One rating: dense user index, dense item index, weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub user: usize,
    pub item: usize,
    pub weight: T,
}

/// Linear map from a raw rating scale onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatingScale {
    pub min_raw: f64,
    pub max_raw: f64,
}

impl RatingScale {
    pub fn new(min_raw: f64, max_raw: f64) -> Result<Self> {
        if !(min_raw.is_finite() && max_raw.is_finite() && max_raw > min_raw) {
            return Err(DebiasError::InvalidScale {
                min: min_raw,
                max: max_raw,
            });
        }
        Ok(Self { min_raw, max_raw })
    }

    /// MovieLens stars, 1..5 mapped to (s - 1) / 4.
    pub fn stars() -> Self {
        Self {
            min_raw: 1.0,
            max_raw: 5.0,
        }
    }

    pub fn unit() -> Self {
        Self {
            min_raw: 0.0,
            max_raw: 1.0,
        }
    }

    pub fn contains(&self, raw: f64) -> bool {
        raw >= self.min_raw && raw <= self.max_raw
    }

    /// Caller is responsible for checking `contains` first.
    pub fn normalize(&self, raw: f64) -> f64 {
        let unit = (raw - self.min_raw) / (self.max_raw - self.min_raw);
        unit.clamp(0.0, 1.0)
    }
}

impl std::str::FromStr for RatingScale {
    type Err = String;

    /// Parses `lo:hi`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
        RatingScale::new(lo, hi).map_err(|e| e.to_string())
    }
}

/// Number of rating-count bins: 1, 2-3, 4-7, ..., 512-1023, >= 1024.
pub const NUM_BINS: usize = 11;

/// Bin (1-based) of an item that received `num_ratings` ratings.
pub fn bin_of(num_ratings: usize) -> Result<usize> {
    if num_ratings == 0 {
        return Err(DebiasError::ZeroCount);
    }
    let floor_log2 = (usize::BITS - 1 - num_ratings.leading_zeros()) as usize;
    Ok((floor_log2 + 1).min(NUM_BINS))
}

/// Inclusive rating-count range of a bin; the last bin is open ended.
pub fn bin_bounds(bin: usize) -> Option<(usize, Option<usize>)> {
    match bin {
        1..=10 => Some((1 << (bin - 1), Some((1 << bin) - 1))),
        NUM_BINS => Some((1 << (NUM_BINS - 1), None)),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct RatingGraph<T> {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    edges: Vec<Edge<T>>,
    user_offsets: Vec<usize>,
    user_items: Vec<usize>,
    user_weights: Vec<T>,
    item_offsets: Vec<usize>,
    item_users: Vec<usize>,
    item_weights: Vec<T>,
}

impl<T: Scalar> RatingGraph<T> {
    /// Builds a graph whose external ids are the decimal dense indices.
    pub fn from_edges(num_users: usize, num_items: usize, edges: Vec<Edge<T>>) -> Result<Self> {
        let user_ids = (0..num_users).map(|u| u.to_string()).collect();
        let item_ids = (0..num_items).map(|i| i.to_string()).collect();
        Self::from_labeled_edges(user_ids, item_ids, edges)
    }

    /// Every user and item must have at least one edge; at most one edge per
    /// (user, item) pair; weights in `[0, 1]`.
    pub fn from_labeled_edges(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        edges: Vec<Edge<T>>,
    ) -> Result<Self> {
        let num_users = user_ids.len();
        let num_items = item_ids.len();
        let user_lookup = index_ids(&user_ids, "user")?;
        let item_lookup = index_ids(&item_ids, "item")?;

        for (k, e) in edges.iter().enumerate() {
            if e.user >= num_users || e.item >= num_items {
                return Err(DebiasError::InvalidGraph(format!(
                    "edge {k} ({}, {}) out of bounds for {num_users} users x {num_items} items",
                    e.user, e.item
                )));
            }
            if !(e.weight >= T::zero() && e.weight <= T::one()) {
                return Err(DebiasError::InvalidGraph(format!(
                    "edge {k} weight {} outside [0, 1]",
                    e.weight
                )));
            }
        }

        let (user_offsets, user_items, user_weights) =
            compress(num_users, &edges, |e| (e.user, e.item));
        let (item_offsets, item_users, item_weights) =
            compress(num_items, &edges, |e| (e.item, e.user));

        for u in 0..num_users {
            let slice = &user_items[user_offsets[u]..user_offsets[u + 1]];
            if slice.is_empty() {
                return Err(DebiasError::InvalidGraph(format!(
                    "user {:?} has no ratings",
                    user_ids[u]
                )));
            }
            if let Some(w) = slice.windows(2).find(|w| w[0] == w[1]) {
                return Err(DebiasError::InvalidGraph(format!(
                    "user {:?} rated item {:?} more than once",
                    user_ids[u], item_ids[w[0]]
                )));
            }
        }
        if let Some(i) = (0..num_items).find(|&i| item_offsets[i] == item_offsets[i + 1]) {
            return Err(DebiasError::InvalidGraph(format!(
                "item {:?} has no ratings",
                item_ids[i]
            )));
        }

        Ok(Self {
            user_ids,
            item_ids,
            user_lookup,
            item_lookup,
            edges,
            user_offsets,
            user_items,
            user_weights,
            item_offsets,
            item_users,
            item_weights,
        })
    }

    pub fn empty() -> Self {
        Self::from_edges(0, 0, Vec::new()).expect("empty graph is valid")
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in construction order.
    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    /// `|d+_i|`
    pub fn user_degree(&self, user: usize) -> usize {
        self.user_offsets[user + 1] - self.user_offsets[user]
    }

    /// `|d-_j|`
    pub fn item_degree(&self, item: usize) -> usize {
        self.item_offsets[item + 1] - self.item_offsets[item]
    }

    /// Items rated by `user` (ascending) with the matching weights.
    pub fn user_ratings(&self, user: usize) -> (&[usize], &[T]) {
        let range = self.user_offsets[user]..self.user_offsets[user + 1];
        (&self.user_items[range.clone()], &self.user_weights[range])
    }

    /// Users that rated `item` (ascending) with the matching weights.
    pub fn item_ratings(&self, item: usize) -> (&[usize], &[T]) {
        let range = self.item_offsets[item]..self.item_offsets[item + 1];
        (&self.item_users[range.clone()], &self.item_weights[range])
    }

    /// Plain per-item mean rating, summed left to right over the item's
    /// adjacency slice.
    pub fn mean_ratings(&self) -> Vec<T> {
        (0..self.num_items())
            .map(|j| {
                let (_, weights) = self.item_ratings(j);
                let sum = weights.iter().fold(T::zero(), |acc, &w| acc + w);
                sum / T::of_count(weights.len())
            })
            .collect()
    }

    /// Rating-count bin of every item.
    pub fn item_bins(&self) -> Vec<usize> {
        (0..self.num_items())
            .map(|j| bin_of(self.item_degree(j)).expect("items have at least one rating"))
            .collect()
    }

    /// Pairs item external ids with a per-item vector.
    pub fn item_scores(&self, values: &[T]) -> Result<crate::ScoreMap<T>> {
        if values.len() != self.num_items() {
            return Err(DebiasError::LengthMismatch {
                expected: self.num_items(),
                actual: values.len(),
            });
        }
        Ok(self.item_ids.iter().cloned().zip(values.iter().copied()).collect())
    }

    /// Writes `user_id,item_id,weight` with nine decimals, in edge order.
    pub fn write_edges_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "user_id,item_id,weight")?;
        for e in &self.edges {
            writeln!(
                out,
                "{},{},{:.9}",
                self.user_ids[e.user], self.item_ids[e.item], e.weight
            )?;
        }
        Ok(())
    }
}

/// Number of items in each rating-count bin, index 0 holding bin 1.
pub fn degree_histogram<T: Scalar>(graph: &RatingGraph<T>) -> [usize; NUM_BINS] {
    let mut counts = [0; NUM_BINS];
    for bin in graph.item_bins() {
        counts[bin - 1] += 1;
    }
    counts
}

fn index_ids(ids: &[String], kind: &str) -> Result<HashMap<String, usize>> {
    let mut lookup = HashMap::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        if lookup.insert(id.clone(), k).is_some() {
            return Err(DebiasError::InvalidGraph(format!("duplicate {kind} id {id:?}")));
        }
    }
    Ok(lookup)
}

/// Counting sort of edges by `key(e).0`, neighbours sorted by `key(e).1`.
fn compress<T: Scalar>(
    num_nodes: usize,
    edges: &[Edge<T>],
    key: impl Fn(&Edge<T>) -> (usize, usize),
) -> (Vec<usize>, Vec<usize>, Vec<T>) {
    let mut offsets = vec![0usize; num_nodes + 1];
    for e in edges {
        offsets[key(e).0 + 1] += 1;
    }
    for k in 0..num_nodes {
        offsets[k + 1] += offsets[k];
    }
    let mut cursor = offsets.clone();
    let mut slots: Vec<(usize, T)> = vec![(0, T::zero()); edges.len()];
    for e in edges {
        let (node, other) = key(e);
        slots[cursor[node]] = (other, e.weight);
        cursor[node] += 1;
    }
    for k in 0..num_nodes {
        slots[offsets[k]..offsets[k + 1]].sort_unstable_by_key(|&(other, _)| other);
    }
    let (neighbours, weights) = slots.into_iter().unzip();
    (offsets, neighbours, weights)
}
