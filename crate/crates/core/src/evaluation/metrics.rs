//! Per-query retrieval scores.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::retrieval::RankedList;

/// 1-based ranks of the relevant items, ascending.
fn relevant_ranks(ranked: &RankedList, relevant: &HashSet<&str>) -> Result<Vec<usize>> {
    if relevant.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "query {:?} has an empty relevant set",
            ranked.query_id
        )));
    }
    let ranks: Vec<usize> = ranked
        .ids()
        .enumerate()
        .filter(|(_, id)| relevant.contains(id))
        .map(|(i, _)| i + 1)
        .collect();
    if ranks.len() != relevant.len() {
        return Err(Error::InvalidArgument(format!(
            "ranked list of {:?} contains {} of its {} relevant items",
            ranked.query_id,
            ranks.len(),
            relevant.len()
        )));
    }
    Ok(ranks)
}

/// Mean of the precision at the rank of each relevant item.
pub fn average_precision(ranked: &RankedList, relevant: &HashSet<&str>) -> Result<f64> {
    let ranks = relevant_ranks(ranked, relevant)?;
    let sum: f64 = ranks
        .iter()
        .enumerate()
        .map(|(j, &r)| (j + 1) as f64 / r as f64)
        .sum();
    Ok(sum / ranks.len() as f64)
}

/// Normalized modified retrieval rank (MPEG-7).
///
/// With `NG` relevant items and `gtm` the largest ground-truth size over all
/// queries, the window is `K = min(4·NG, 2·gtm)`; items ranked beyond `K` count
/// as rank `1.25·K`. The result is 0 for perfect retrieval and 1 when every
/// relevant item falls outside the window.
pub fn nmrr(ranked: &RankedList, relevant: &HashSet<&str>, gtm: usize) -> Result<f64> {
    let ranks = relevant_ranks(ranked, relevant)?;
    let ng = ranks.len();
    if gtm < ng {
        return Err(Error::InvalidArgument(format!(
            "gtm {gtm} is smaller than the ground-truth size {ng}"
        )));
    }
    let k = (4 * ng).min(2 * gtm) as f64;
    let ng = ng as f64;
    let avr = ranks
        .iter()
        .map(|&r| if r as f64 <= k { r as f64 } else { 1.25 * k })
        .sum::<f64>()
        / ng;
    let mrr = avr - 0.5 - ng / 2.0;
    let denom = 1.25 * k - 0.5 - ng / 2.0;
    Ok((mrr / denom).clamp(0.0, 1.0))
}
