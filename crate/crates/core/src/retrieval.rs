//! Exhaustive top-N candidate generation over global descriptors.

use std::cmp::Ordering;

use crate::error::{Result, VprError};
use crate::scalar::Scalar;
use crate::tensor_features::cosine_distance_unchecked;

/// Default number of match hypotheses passed to sequence matching.
pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T> {
    pub index: usize,
    pub distance: T,
}

/// The `n` references closest to `query` in cosine distance, nearest first,
/// ties to the smaller index.
pub fn top_n_candidates<T: Scalar, R: AsRef<[T]>>(
    query: &[T],
    references: &[R],
    n: usize,
) -> Result<Vec<Candidate<T>>> {
    if n == 0 {
        return Err(VprError::contract("N must be at least 1"));
    }
    if references.is_empty() {
        return Err(VprError::contract("reference database is empty"));
    }
    let mut all = references
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let r = r.as_ref();
            if r.len() != query.len() {
                return Err(VprError::structure(format!(
                    "global descriptor {index} has dimension {}, query has {}",
                    r.len(),
                    query.len()
                )));
            }
            Ok(Candidate {
                index,
                distance: cosine_distance_unchecked(query, r),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let by_rank = |a: &Candidate<T>, b: &Candidate<T>| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    };
    let keep = n.min(all.len());
    if keep < all.len() {
        all.select_nth_unstable_by(keep - 1, by_rank);
        all.truncate(keep);
    }
    all.sort_by(by_rank);
    Ok(all)
}
