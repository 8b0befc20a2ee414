use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Ordered list of `(source index, target index)` translation pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dictionary {
    pairs: Vec<(usize, usize)>,
    pub source_tag: String,
    pub target_tag: String,
}

impl Dictionary {
    pub fn new(
        pairs: Vec<(usize, usize)>,
        source_tag: impl Into<String>,
        target_tag: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(*p) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate dictionary pair ({}, {})",
                    p.0, p.1
                )));
            }
        }
        Ok(Dictionary {
            pairs,
            source_tag: source_tag.into(),
            target_tag: target_tag.into(),
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// Same pairs with roles swapped, sorted by the new source index.
    pub fn transposed(&self) -> Dictionary {
        let mut pairs: Vec<_> = self.pairs.iter().map(|&(s, t)| (t, s)).collect();
        pairs.sort_unstable();
        Dictionary {
            pairs,
            source_tag: self.target_tag.clone(),
            target_tag: self.source_tag.clone(),
        }
    }

    /// Checks every index against the vocabulary sizes.
    pub fn validate(&self, n_source: usize, n_target: usize) -> Result<()> {
        match self
            .pairs
            .iter()
            .find(|&&(s, t)| s >= n_source || t >= n_target)
        {
            Some(&(s, t)) => Err(Error::InvalidArgument(format!(
                "pair ({s}, {t}) outside vocabularies of size {n_source} and {n_target}"
            ))),
            None => Ok(()),
        }
    }

    /// Writes `src_word<TAB>tgt_word` lines.
    pub fn write_words(
        &self,
        path: &Path,
        source: &EmbeddingMatrix,
        target: &EmbeddingMatrix,
    ) -> Result<()> {
        self.validate(source.len(), target.len())?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for &(s, t) in &self.pairs {
            writeln!(w, "{}\t{}", source.words()[s], target.words()[t]).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
