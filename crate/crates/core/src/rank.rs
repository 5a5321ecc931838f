use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ranked `(doc_index, score)` list, best first.
pub type Ranking<T = f64> = Vec<(usize, T)>;

/// Top `k` entries by descending score; equal scores keep ascending index.
pub fn top_k<T: Scalar>(scores: &[T], k: usize) -> Result<Ranking<T>> {
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={}, got {k}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    Ok(order.into_iter().map(|i| (i, scores[i])).collect())
}
