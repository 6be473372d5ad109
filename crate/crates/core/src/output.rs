//! Result files: per-node CSVs with nine decimals and the JSON trace.

use std::io::Write;

use crate::error::{DebiasError, Result};
use crate::graph::RatingGraph;
use crate::scalar::Scalar;
use crate::solver::IterationRecord;

/// `user_id,bias`
pub fn write_bias_csv<T: Scalar, W: Write>(graph: &RatingGraph<T>, bias: &[T], out: W) -> Result<()> {
    write_labeled(graph.user_ids(), bias, "user_id,bias", out)
}

/// `item_id,true_rating`
pub fn write_ratings_csv<T: Scalar, W: Write>(
    graph: &RatingGraph<T>,
    ratings: &[T],
    out: W,
) -> Result<()> {
    write_labeled(graph.item_ids(), ratings, "item_id,true_rating", out)
}

/// Two-column CSV of ids and values, in the given order.
pub fn write_labeled<T: Scalar, W: Write>(
    ids: &[String],
    values: &[T],
    header: &str,
    mut out: W,
) -> Result<()> {
    if ids.len() != values.len() {
        return Err(DebiasError::LengthMismatch {
            expected: ids.len(),
            actual: values.len(),
        });
    }
    let io = |e| DebiasError::io("<output>", e);
    writeln!(out, "{header}").map_err(io)?;
    for (id, v) in ids.iter().zip(values) {
        writeln!(out, "{id},{v:.9}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `[{iter, l1_bias_delta, linf_bias_delta, l1_rating_delta}, ...]`
pub fn write_trace_json<T: Scalar, W: Write>(trace: &[IterationRecord<T>], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, trace)?;
    Ok(())
}
