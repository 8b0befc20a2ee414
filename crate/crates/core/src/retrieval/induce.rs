use log::warn;
use ndarray::{s, ArrayView2};

use super::csls::{CslsParams, RetrievalMode, SimilarityIndex};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// Mutual CSLS nearest neighbors among the first `top_n` mapped source rows
/// and all target rows, sorted by source index.
///
/// An empty dictionary is returned (with a warning) rather than an error.
pub fn build_dictionary(
    mapped_src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
    params: CslsParams,
    top_n: usize,
) -> Result<Dictionary> {
    if top_n == 0 || top_n > mapped_src.nrows() {
        return Err(Error::InvalidArgument(format!(
            "top_n={top_n} outside 1..={}",
            mapped_src.nrows()
        )));
    }
    let queries = mapped_src.slice(s![..top_n, ..]);
    let index = SimilarityIndex::new(queries, tgt, RetrievalMode::Csls, params)?;
    let forward = index.nearest_targets();
    let backward = index.nearest_queries();
    let pairs: Vec<(usize, usize)> = forward
        .iter()
        .enumerate()
        .filter(|&(i, &j)| backward[j] == i)
        .map(|(i, &j)| (i, j))
        .collect();
    if pairs.is_empty() {
        warn!("dictionary induction found no mutual nearest neighbors");
    }
    Dictionary::new(pairs, "src", "tgt")
}
