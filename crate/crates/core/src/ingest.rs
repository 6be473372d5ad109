//! Delimited-text readers for rating files and ground-truth score files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{DebiasError, Result};
use crate::graph::{Edge, RatingGraph, RatingScale};
use crate::scalar::Scalar;
use crate::ScoreMap;

/// Field layout of a delimited text file. Column indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimitedFormat {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub has_header: bool,
}

impl DelimitedFormat {
    /// `user::item::rating::timestamp`, no header.
    pub fn movielens() -> Self {
        Self {
            delimiter: "::".to_owned(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            has_header: false,
        }
    }

    /// The canonical `user_id,item_id,weight` CSV written by this crate.
    pub fn canonical_csv() -> Self {
        Self {
            delimiter: ",".to_owned(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            has_header: true,
        }
    }
}

impl Default for DelimitedFormat {
    fn default() -> Self {
        Self::movielens()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// A second rating for the same (user, item) pair is an error.
    #[default]
    Strict,
    /// Later ratings for an already-seen pair are dropped.
    KeepFirst,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub format: DelimitedFormat,
    pub scale: RatingScale,
    pub duplicates: DuplicatePolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            format: DelimitedFormat::movielens(),
            scale: RatingScale::stars(),
            duplicates: DuplicatePolicy::Strict,
        }
    }
}

pub fn ingest_ratings<T: Scalar>(path: &Path, options: &IngestOptions) -> Result<RatingGraph<T>> {
    let file = File::open(path).map_err(|e| DebiasError::io(path, e))?;
    read_ratings(BufReader::new(file), options).map_err(|e| attach_path(e, path))
}

/// Dense indices are assigned in first-appearance order.
pub fn read_ratings<T: Scalar, R: BufRead>(
    reader: R,
    options: &IngestOptions,
) -> Result<RatingGraph<T>> {
    let mut users = IdInterner::default();
    let mut items = IdInterner::default();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let fmt = &options.format;
    let needed = fmt.user_col.max(fmt.item_col).max(fmt.rating_col) + 1;

    for record in records(reader, fmt.has_header) {
        let (line, text) = record?;
        let fields: Vec<&str> = text.split(fmt.delimiter.as_str()).collect();
        if fields.len() < needed {
            return Err(DebiasError::MalformedRecord {
                line,
                reason: format!("expected at least {needed} fields, found {}", fields.len()),
            });
        }
        let user_id = non_empty(fields[fmt.user_col], line, "user id")?;
        let item_id = non_empty(fields[fmt.item_col], line, "item id")?;
        let raw = parse_number(fields[fmt.rating_col], line)?;
        if !options.scale.contains(raw) {
            return Err(DebiasError::OutOfScale {
                line,
                value: raw,
                min: options.scale.min_raw,
                max: options.scale.max_raw,
            });
        }

        let user = users.intern(user_id);
        let item = items.intern(item_id);
        if seen.contains_key(&(user, item)) {
            match options.duplicates {
                DuplicatePolicy::Strict => {
                    return Err(DebiasError::DuplicateRating {
                        line,
                        user: user_id.to_owned(),
                        item: item_id.to_owned(),
                    })
                }
                DuplicatePolicy::KeepFirst => continue,
            }
        }
        seen.insert((user, item), line);
        edges.push(Edge {
            user,
            item,
            weight: T::of(options.scale.normalize(raw)),
        });
    }

    RatingGraph::from_labeled_edges(users.ids, items.ids, edges)
}

/// Trusted per-item scores, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub scores: ScoreMap<T>,
    /// Items with a score but no ratings in the graph last matched against.
    pub unmatched: BTreeSet<String>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new(scores: ScoreMap<T>) -> Self {
        Self {
            scores,
            unmatched: BTreeSet::new(),
        }
    }

    /// Recomputes `unmatched` against `graph`; entries are never dropped.
    pub fn flag_unmatched(&mut self, graph: &RatingGraph<T>) {
        self.unmatched = self
            .scores
            .keys()
            .filter(|id| graph.item_index(id).is_none())
            .cloned()
            .collect();
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Field layout of a ground-truth file: `item,score`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthFormat {
    pub delimiter: String,
    pub item_col: usize,
    pub score_col: usize,
    pub has_header: bool,
}

impl Default for TruthFormat {
    fn default() -> Self {
        Self {
            delimiter: ",".to_owned(),
            item_col: 0,
            score_col: 1,
            has_header: false,
        }
    }
}

pub fn ingest_ground_truth<T: Scalar>(
    path: &Path,
    scale: &RatingScale,
    format: &TruthFormat,
) -> Result<GroundTruth<T>> {
    let file = File::open(path).map_err(|e| DebiasError::io(path, e))?;
    read_ground_truth(BufReader::new(file), scale, format).map_err(|e| attach_path(e, path))
}

pub fn read_ground_truth<T: Scalar, R: BufRead>(
    reader: R,
    scale: &RatingScale,
    format: &TruthFormat,
) -> Result<GroundTruth<T>> {
    let needed = format.item_col.max(format.score_col) + 1;
    let mut scores = BTreeMap::new();
    for record in records(reader, format.has_header) {
        let (line, text) = record?;
        let fields: Vec<&str> = text.split(format.delimiter.as_str()).collect();
        if fields.len() < needed {
            return Err(DebiasError::MalformedRecord {
                line,
                reason: format!("expected at least {needed} fields, found {}", fields.len()),
            });
        }
        let item = non_empty(fields[format.item_col], line, "item id")?;
        let raw = parse_number(fields[format.score_col], line)?;
        if !scale.contains(raw) {
            return Err(DebiasError::OutOfScale {
                line,
                value: raw,
                min: scale.min_raw,
                max: scale.max_raw,
            });
        }
        if scores.insert(item.to_owned(), T::of(scale.normalize(raw))).is_some() {
            return Err(DebiasError::DuplicateTruth {
                line,
                item: item.to_owned(),
            });
        }
    }
    Ok(GroundTruth::new(scores))
}

#[derive(Default)]
struct IdInterner {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdInterner {
    fn intern(&mut self, id: &str) -> usize {
        if let Some(&k) = self.lookup.get(id) {
            return k;
        }
        let k = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), k);
        k
    }
}

/// Non-blank lines with their 1-based line numbers, optionally skipping the
/// first non-blank line as a header.
fn records<R: BufRead>(
    reader: R,
    skip_header: bool,
) -> impl Iterator<Item = Result<(usize, String)>> {
    let mut header_pending = skip_header;
    reader
        .lines()
        .enumerate()
        .filter_map(move |(k, line)| {
            let line_no = k + 1;
            let text = match line {
                Ok(text) => text,
                Err(e) => {
                    return Some(Err(DebiasError::MalformedRecord {
                        line: line_no,
                        reason: e.to_string(),
                    }))
                }
            };
            let trimmed = text.trim();
            if trimmed.is_empty() {
                return None;
            }
            if header_pending {
                header_pending = false;
                return None;
            }
            Some(Ok((line_no, trimmed.to_owned())))
        })
}

fn non_empty<'a>(field: &'a str, line: usize, what: &str) -> Result<&'a str> {
    let field = field.trim();
    if field.is_empty() {
        return Err(DebiasError::MalformedRecord {
            line,
            reason: format!("empty {what}"),
        });
    }
    Ok(field)
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let field = field.trim();
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DebiasError::MalformedRecord {
            line,
            reason: format!("rating {field:?} is not a finite number"),
        }),
    }
}

fn attach_path(err: DebiasError, path: &Path) -> DebiasError {
    match err {
        DebiasError::MalformedRecord { line, reason } => DebiasError::MalformedRecord {
            line,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    }
}
