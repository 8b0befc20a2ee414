//! Monolingual embedding sets: text `.vec` I/O, normalization and the
//! synthetic benchmark generator.

mod synth;
mod vec_format;

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{synth_pair, SynthPair, SynthSpec, SynthStructure};
pub use vec_format::{load_embeddings, read_embeddings, write_embeddings, LoadReport, DEFAULT_MAX_VOCAB};

/// A vocabulary with one embedding row per word, in frequency order.
///
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    lang: String,
}

impl EmbeddingMatrix {
    pub fn new(words: Vec<String>, vectors: Array2<f64>, lang: impl Into<String>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::shape(
                "embedding matrix",
                format!("{} rows", words.len()),
                format!("{} rows", vectors.nrows()),
            ));
        }
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("embedding contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word {w:?}")));
            }
        }
        Ok(EmbeddingMatrix {
            words,
            index,
            vectors,
            lang: lang.into(),
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// The first `n` rows (or all of them, when `n` exceeds the vocabulary).
    pub fn head(&self, n: usize) -> ArrayView2<'_, f64> {
        let n = n.min(self.len());
        self.vectors.slice(ndarray::s![..n, ..])
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }
}

/// Row preprocessing applied after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    Unit,
    CenterUnit,
}

pub fn normalize(emb: &EmbeddingMatrix, mode: Normalization) -> Result<EmbeddingMatrix> {
    let mut vectors = emb.vectors.clone();
    match mode {
        Normalization::None => {}
        Normalization::Unit => unit_normalize_rows(&mut vectors)?,
        Normalization::CenterUnit => {
            if let Some(mean) = vectors.mean_axis(Axis(0)) {
                vectors -= &mean.insert_axis(Axis(0));
            }
            unit_normalize_rows(&mut vectors)?;
        }
    }
    Ok(EmbeddingMatrix {
        vectors,
        ..emb.clone()
    })
}

fn unit_normalize_rows(vectors: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate(format!("row {i} has zero norm")));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn matrix(rows: Array2<f64>) -> EmbeddingMatrix {
        let words = (0..rows.nrows()).map(|i| format!("w{i}")).collect();
        EmbeddingMatrix::new(words, rows, "xx").unwrap()
    }

    #[test]
    fn unit_rows_by_hand() {
        let e = normalize(&matrix(array![[3.0, 4.0]]), Normalization::Unit).unwrap();
        assert_abs_diff_eq!(e.vector(0)[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vector(0)[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn none_is_identity() {
        let m = matrix(array![[3.0, 4.0], [0.0, 0.0]]);
        assert_eq!(normalize(&m, Normalization::None).unwrap(), m);
    }

    #[test]
    fn center_unit_on_symmetric_rows() {
        let m = matrix(array![[1.0, 0.0], [-1.0, 0.0]]);
        assert_eq!(normalize(&m, Normalization::CenterUnit).unwrap(), m);
    }

    #[test]
    fn zero_row_rejected_under_unit_modes() {
        let m = matrix(array![[0.0, 0.0], [1.0, 1.0]]);
        assert!(normalize(&m, Normalization::Unit).is_err());
        let m = matrix(array![[1.0, 1.0], [1.0, 1.0]]);
        assert!(normalize(&m, Normalization::CenterUnit).is_err());
    }

    #[test]
    fn constructor_invariants() {
        assert!(EmbeddingMatrix::new(vec!["a".into()], Array2::zeros((2, 2)), "x").is_err());
        assert!(EmbeddingMatrix::new(vec!["a".into(), "a".into()], Array2::zeros((2, 2)), "x").is_err());
        assert!(EmbeddingMatrix::new(vec!["a".into()], array![[f64::INFINITY]], "x").is_err());
        let e = matrix(array![[1.0], [2.0]]);
        assert_eq!(e.index_of("w1"), Some(1));
        assert_eq!(e.index_of("nope"), None);
        assert_eq!(e.head(10).nrows(), 2);
    }
}
