//! Cross-domain similarity local scaling.
//!
//! `CSLS(x, y) = 2·cos(x, y) − r_T(x) − r_S(y)`, where `r_T(x)` is the mean
//! cosine of `x` to its `k` nearest targets and `r_S(y)` the mean cosine of
//! `y` to its `k` nearest mapped sources. Hubs, which are close to
//! everything, get large penalties.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::linear::unit_rows;

const BLOCK_ROWS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CslsParams {
    pub k_neighbors: usize,
}

impl Default for CslsParams {
    fn default() -> Self {
        CslsParams { k_neighbors: 10 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    #[default]
    Csls,
    Cosine,
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RetrievalMode::Csls => "csls",
            RetrievalMode::Cosine => "cosine",
        })
    }
}

/// Query-by-target similarity with precomputed neighborhood penalties.
///
/// Rows of both sets are unit-normalized on construction. In cosine mode
/// the penalties are zero and scores are plain cosines.
#[derive(Clone, Debug)]
pub struct SimilarityIndex {
    queries: Array2<f64>,
    targets: Array2<f64>,
    query_penalty: Array1<f64>,
    target_penalty: Array1<f64>,
    mode: RetrievalMode,
}

/// Builds the CSLS index for mapped source rows against target rows.
pub fn csls_scores(
    mapped_src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
    params: CslsParams,
) -> Result<SimilarityIndex> {
    SimilarityIndex::new(mapped_src, tgt, RetrievalMode::Csls, params)
}

impl SimilarityIndex {
    pub fn new(
        queries: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        mode: RetrievalMode,
        params: CslsParams,
    ) -> Result<Self> {
        if queries.ncols() != targets.ncols() {
            return Err(Error::shape(
                "similarity index",
                format!("target width {}", queries.ncols()),
                format!("target width {}", targets.ncols()),
            ));
        }
        let (n, m) = (queries.nrows(), targets.nrows());
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("similarity index over an empty set".into()));
        }
        let queries = unit_rows(queries);
        let targets = unit_rows(targets);
        let (query_penalty, target_penalty) = match mode {
            RetrievalMode::Cosine => (Array1::zeros(n), Array1::zeros(m)),
            RetrievalMode::Csls => {
                let k = params.k_neighbors;
                if k == 0 || k > n.min(m) {
                    return Err(Error::InvalidArgument(format!(
                        "CSLS neighborhood k={k} outside 1..={}",
                        n.min(m)
                    )));
                }
                (
                    mean_top_k_similarity(queries.view(), targets.view(), k),
                    mean_top_k_similarity(targets.view(), queries.view(), k),
                )
            }
        };
        Ok(SimilarityIndex {
            queries,
            targets,
            query_penalty,
            target_penalty,
            mode,
        })
    }

    pub fn mode(&self) -> RetrievalMode {
        self.mode
    }

    pub fn n_queries(&self) -> usize {
        self.queries.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.nrows()
    }

    /// `r_T` for every query.
    pub fn query_penalty(&self) -> ArrayView1<'_, f64> {
        self.query_penalty.view()
    }

    /// `r_S` for every target.
    pub fn target_penalty(&self) -> ArrayView1<'_, f64> {
        self.target_penalty.view()
    }

    pub fn cosines(&self, query: usize) -> Array1<f64> {
        self.targets.dot(&self.queries.row(query))
    }

    pub fn cosine(&self, query: usize, target: usize) -> f64 {
        self.queries.row(query).dot(&self.targets.row(target))
    }

    /// Retrieval scores of one query against every target.
    pub fn scores(&self, query: usize) -> Array1<f64> {
        let cos = self.cosines(query);
        self.to_scores(query, cos)
    }

    fn to_scores(&self, query: usize, cos: Array1<f64>) -> Array1<f64> {
        match self.mode {
            RetrievalMode::Cosine => cos,
            RetrievalMode::Csls => {
                let rq = self.query_penalty[query];
                let mut out = cos;
                out.zip_mut_with(&self.target_penalty, |c, &rt| *c = 2.0 * *c - rq - rt);
                out
            }
        }
    }

    /// Best target per query; ties go to the lower index.
    pub fn nearest_targets(&self) -> Vec<usize> {
        let mut best = Vec::with_capacity(self.n_queries());
        for start in (0..self.n_queries()).step_by(BLOCK_ROWS) {
            let end = (start + BLOCK_ROWS).min(self.n_queries());
            let sims = self.queries.slice(s![start..end, ..]).dot(&self.targets.t());
            for (offset, row) in sims.rows().into_iter().enumerate() {
                let q = start + offset;
                let rq = self.query_penalty[q];
                best.push(argmax(row.iter().zip(self.target_penalty.iter()).map(|(&c, &rt)| {
                    self.combine(c, rq, rt)
                })));
            }
        }
        best
    }

    /// Best query per target under the same scores; ties go to the lower index.
    pub fn nearest_queries(&self) -> Vec<usize> {
        let mut best = Vec::with_capacity(self.n_targets());
        for start in (0..self.n_targets()).step_by(BLOCK_ROWS) {
            let end = (start + BLOCK_ROWS).min(self.n_targets());
            let sims = self.targets.slice(s![start..end, ..]).dot(&self.queries.t());
            for (offset, row) in sims.rows().into_iter().enumerate() {
                let rt = self.target_penalty[start + offset];
                best.push(argmax(row.iter().zip(self.query_penalty.iter()).map(|(&c, &rq)| {
                    self.combine(c, rq, rt)
                })));
            }
        }
        best
    }

    /// The `k` best targets for a query, by descending score then ascending
    /// index. `k` is clamped to the number of targets.
    pub fn top_k(&self, query: usize, k: usize) -> Vec<(usize, f64)> {
        let scores = self.scores(query);
        let mut ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        let k = k.min(ranked.len());
        let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k < ranked.len() && k > 0 {
            ranked.select_nth_unstable_by(k - 1, order);
            ranked.truncate(k);
        }
        ranked.sort_by(order);
        ranked.truncate(k);
        ranked
    }

    #[inline]
    fn combine(&self, cos: f64, rq: f64, rt: f64) -> f64 {
        match self.mode {
            RetrievalMode::Cosine => cos,
            RetrievalMode::Csls => 2.0 * cos - rq - rt,
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// For each row of `from`, the mean of its `k` largest dot products with the
/// rows of `to`. Rows are assumed unit-normalized.
fn mean_top_k_similarity(from: ArrayView2<f64>, to: ArrayView2<f64>, k: usize) -> Array1<f64> {
    let mut out = Array1::zeros(from.nrows());
    let mut buf = Vec::with_capacity(to.nrows());
    for start in (0..from.nrows()).step_by(BLOCK_ROWS) {
        let end = (start + BLOCK_ROWS).min(from.nrows());
        let sims = from.slice(s![start..end, ..]).dot(&to.t());
        for (offset, row) in sims.rows().into_iter().enumerate() {
            buf.clear();
            buf.extend(row.iter().copied());
            if k < buf.len() {
                buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            }
            out[start + offset] = buf[..k].iter().sum::<f64>() / k as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn two_by_two_by_hand() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mapped = array![[1.0, 0.0], [0.0, 1.0]];
        let targets = array![[1.0, 0.0], [h, h]];
        let idx = csls_scores(mapped.view(), targets.view(), CslsParams { k_neighbors: 1 }).unwrap();
        let a = idx.scores(0);
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 2.0 * h - 1.0 - h, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], -0.2929, epsilon = 1e-4);
        assert_eq!(idx.nearest_targets()[0], 0);
    }

    #[test]
    fn identical_sets_match_themselves() {
        let m = array![[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.4, 0.0, 1.0], [-1.0, 0.5, 0.5]];
        let idx = csls_scores(m.view(), m.view(), CslsParams { k_neighbors: 1 }).unwrap();
        assert_eq!(idx.nearest_targets(), vec![0, 1, 2, 3]);
        assert_eq!(idx.nearest_queries(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_out_of_range() {
        let m = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(csls_scores(m.view(), m.view(), CslsParams { k_neighbors: 3 }).is_err());
        assert!(csls_scores(m.view(), m.view(), CslsParams { k_neighbors: 0 }).is_err());
        // cosine mode ignores k
        assert!(SimilarityIndex::new(m.view(), m.view(), RetrievalMode::Cosine, CslsParams { k_neighbors: 0 }).is_ok());
    }

    #[test]
    fn query_penalty_shift_preserves_ranking() {
        let mapped = array![[1.0, 0.1], [0.3, 1.0], [0.5, 0.5]];
        let targets = array![[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]];
        let idx = csls_scores(mapped.view(), targets.view(), CslsParams { k_neighbors: 2 }).unwrap();
        let mut shifted = idx.clone();
        shifted.query_penalty += 0.37;
        for q in 0..3 {
            let a = idx.scores(q);
            let b = shifted.scores(q);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x - y, 0.37, epsilon = 1e-12);
            }
        }
        assert_eq!(idx.nearest_targets(), shifted.nearest_targets());
    }

    #[test]
    fn top_k_is_sorted_and_clamped() {
        let mapped = array![[1.0, 0.1]];
        let targets = array![[1.0, 0.0], [0.0, 1.0], [0.7, 0.7], [1.0, 0.0]];
        let idx = SimilarityIndex::new(mapped.view(), targets.view(), RetrievalMode::Cosine, CslsParams::default()).unwrap();
        let all = idx.top_k(0, 10);
        assert_eq!(all.len(), 4);
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
        // exact tie between targets 0 and 3 resolves to the lower index
        assert_eq!(all[0].0, 0);
        assert_eq!(all[1].0, 3);
        assert_eq!(idx.top_k(0, 2), all[..2].to_vec());
    }
}
