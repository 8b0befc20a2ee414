//! Word-translation accuracy against gold dictionaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::adversarial::{Direction, ModelState, Side};
use crate::dictionary::Dictionary;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::retrieval::{CslsParams, RetrievalMode, SimilarityIndex};

/// Gold translations grouped by source word, in vocabulary index space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldDictionary {
    /// Source index to its valid target indices, ordered by source index.
    entries: BTreeMap<usize, BTreeSet<usize>>,
    /// Distinct gold source words with no usable translation.
    n_skipped_oov: usize,
}

impl GoldDictionary {
    pub fn entries(&self) -> &BTreeMap<usize, BTreeSet<usize>> {
        &self.entries
    }

    pub fn n_sources(&self) -> usize {
        self.entries.len()
    }

    pub fn n_skipped_oov(&self) -> usize {
        self.n_skipped_oov
    }

    /// Distinct source words in the gold file, usable or not.
    pub fn total_sources(&self) -> usize {
        self.entries.len() + self.n_skipped_oov
    }

    /// Groups index-space pairs by source.
    pub fn from_dictionary(dict: &Dictionary) -> Result<Self> {
        let mut entries: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(s, t) in dict.pairs() {
            entries.entry(s).or_default().insert(t);
        }
        if entries.is_empty() {
            return Err(Error::Empty("gold dictionary has no pairs".into()));
        }
        Ok(GoldDictionary {
            entries,
            n_skipped_oov: 0,
        })
    }
}

/// Reads a gold dictionary of `source target` lines (space or tab separated).
///
/// Pairs with an out-of-vocabulary target are dropped; source words left
/// with no in-vocabulary target, or absent from the source vocabulary, are
/// counted as skipped.
pub fn load_gold(path: &Path, src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<GoldDictionary> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gold(BufReader::new(file), src, tgt).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_gold<R: BufRead>(reader: R, src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<GoldDictionary> {
    // source word -> in-vocabulary targets, in order of first appearance
    let mut by_word: HashMap<String, BTreeSet<usize>> = HashMap::new();
    let mut malformed = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<gold>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(s), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            malformed += 1;
            warn!("gold line {}: expected two fields, skipping", lineno + 1);
            continue;
        };
        let targets = by_word.entry(s.to_string()).or_default();
        if let Some(j) = tgt.index_of(t) {
            targets.insert(j);
        }
    }
    let mut entries: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut skipped = 0;
    for (word, targets) in by_word {
        match src.index_of(&word) {
            Some(i) if !targets.is_empty() => {
                entries.insert(i, targets);
            }
            _ => skipped += 1,
        }
    }
    if malformed > 0 {
        warn!("{malformed} malformed gold lines skipped");
    }
    if entries.is_empty() {
        return Err(Error::Empty(format!(
            "no usable gold pairs ({skipped} source words out of vocabulary)"
        )));
    }
    Ok(GoldDictionary {
        entries,
        n_skipped_oov: skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage of evaluated source words with a gold target in the top k.
    pub p_at: BTreeMap<usize, f64>,
    pub n_evaluated: usize,
    pub n_skipped_oov: usize,
    pub mode: RetrievalMode,
}

#[derive(Serialize)]
struct ReportJson {
    p1: Option<f64>,
    p5: Option<f64>,
    p10: Option<f64>,
    n: usize,
    oov: usize,
    mode: RetrievalMode,
}

impl EvalReport {
    pub fn p(&self, k: usize) -> Option<f64> {
        self.p_at.get(&k).copied()
    }

    /// `{"p1", "p5", "p10", "n", "oov", "mode"}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ReportJson {
            p1: self.p(1),
            p5: self.p(5),
            p10: self.p(10),
            n: self.n_evaluated,
            oov: self.n_skipped_oov,
            mode: self.mode,
        })
        .expect("report serializes")
    }

    /// Checks bounds, monotonicity in k and that evaluated plus skipped
    /// words account for every gold source word.
    pub fn check_integrity(&self, gold_sources: usize) -> Result<()> {
        let mut prev = 0.0;
        for (&k, &p) in &self.p_at {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("P@{k} = {p} outside [0, 100]")));
            }
            if p < prev {
                return Err(Error::InvalidArgument(format!("P@{k} = {p} below a smaller k's {prev}")));
            }
            prev = p;
        }
        if self.n_evaluated + self.n_skipped_oov != gold_sources {
            return Err(Error::InvalidArgument(format!(
                "{} evaluated + {} skipped != {gold_sources} gold sources",
                self.n_evaluated, self.n_skipped_oov
            )));
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "retrieval   {}", self.mode)?;
        for (k, p) in &self.p_at {
            writeln!(f, "P@{k:<9} {p:6.2}")?;
        }
        writeln!(f, "evaluated   {}", self.n_evaluated)?;
        write!(f, "skipped OOV {}", self.n_skipped_oov)
    }
}

fn retrieval_index(
    state: &ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    mode: RetrievalMode,
    params: CslsParams,
) -> Result<SimilarityIndex> {
    let mapped = state.encode_and_map(Direction::SourceToTarget, src.vectors())?;
    let targets = state.encode(Side::Target, tgt.vectors())?;
    let k = params.k_neighbors.min(src.len()).min(tgt.len()).max(1);
    SimilarityIndex::new(mapped.view(), targets.view(), mode, CslsParams { k_neighbors: k })
}

/// P@k for each `k` in `ks`, retrieving over the whole target vocabulary.
pub fn precision_at_k(
    state: &ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    gold: &GoldDictionary,
    ks: &[usize],
    mode: RetrievalMode,
    params: CslsParams,
) -> Result<EvalReport> {
    if gold.entries.is_empty() {
        return Err(Error::Empty("gold dictionary has no usable entries".into()));
    }
    let ks: BTreeSet<usize> = ks.iter().copied().collect();
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("ks must be a non-empty set of positive ranks".into()));
    }
    if let Some((&i, _)) = gold.entries.iter().find(|(&i, t)| i >= src.len() || t.iter().any(|&j| j >= tgt.len())) {
        return Err(Error::InvalidArgument(format!("gold entry for source {i} is outside the vocabularies")));
    }
    let index = retrieval_index(state, src, tgt, mode, params)?;
    let max_k = *ks.iter().next_back().expect("non-empty");
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for (&i, valid) in &gold.entries {
        let ranked = index.top_k(i, max_k);
        let first_hit = ranked.iter().position(|(j, _)| valid.contains(j));
        if let Some(rank) = first_hit {
            for (&k, h) in hits.iter_mut() {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    let n = gold.entries.len();
    Ok(EvalReport {
        p_at: hits.into_iter().map(|(k, h)| (k, 100.0 * h as f64 / n as f64)).collect(),
        n_evaluated: n,
        n_skipped_oov: gold.n_skipped_oov,
        mode,
    })
}

/// Ranked target words for one source word.
pub fn translate(
    state: &ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    word: &str,
    topk: usize,
    mode: RetrievalMode,
    params: CslsParams,
) -> Result<Vec<(String, f64)>> {
    let i = src
        .index_of(word)
        .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
    let index = retrieval_index(state, src, tgt, mode, params)?;
    Ok(index
        .top_k(i, topk)
        .into_iter()
        .map(|(j, s)| (tgt.words()[j].clone(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::Autoencoder;
    use crate::config::TrainConfig;
    use crate::tensor::{DiscriminatorNet, LinearMap};
    use ndarray::{array, Array2};

    fn identity_state(d: usize) -> ModelState {
        let ae = |lang: &str| Autoencoder::new(LinearMap::identity(d), LinearMap::identity(d), lang).unwrap();
        let cfg = TrainConfig::default();
        ModelState {
            ae_src: ae("aa"),
            ae_tgt: ae("bb"),
            mapper_g: LinearMap::identity(d),
            mapper_f: LinearMap::identity(d),
            disc_src: DiscriminatorNet::zeros(d, 2, cfg.leaky_slope, cfg.disc_dropout),
            disc_tgt: DiscriminatorNet::zeros(d, 2, cfg.leaky_slope, cfg.disc_dropout),
        }
    }

    fn emb(prefix: &str, m: Array2<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::new((0..m.nrows()).map(|i| format!("{prefix}{i}")).collect(), m, prefix).unwrap()
    }

    #[test]
    fn identical_spaces_score_100_with_cosine() {
        let m = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]];
        let (s, t) = (emb("s", m.clone()), emb("t", m));
        let gold = GoldDictionary::from_dictionary(&Dictionary::new((0..4).map(|i| (i, i)).collect(), "s", "t").unwrap()).unwrap();
        let r = precision_at_k(&identity_state(3), &s, &t, &gold, &[1, 5, 10], RetrievalMode::Cosine, CslsParams::default()).unwrap();
        for k in [1, 5, 10] {
            assert_eq!(r.p(k), Some(100.0));
        }
        r.check_integrity(4).unwrap();
    }

    #[test]
    fn hand_counted_ranks() {
        // source 0's gold target ranks third; source 1's ranks first
        let src = array![[1.0, 0.0], [0.0, 1.0]];
        let tgt = array![[1.0, 0.0], [0.9, 0.1], [0.8, 0.2], [0.0, 1.0], [-1.0, 0.0], [-0.9, -0.4]];
        let (s, t) = (emb("s", src), emb("t", tgt));
        let gold = GoldDictionary::from_dictionary(&Dictionary::new(vec![(0, 2), (1, 3)], "s", "t").unwrap()).unwrap();
        let r = precision_at_k(&identity_state(2), &s, &t, &gold, &[1, 5], RetrievalMode::Cosine, CslsParams::default()).unwrap();
        assert_eq!(r.p(1), Some(50.0));
        assert_eq!(r.p(5), Some(100.0));
    }

    #[test]
    fn gold_parsing_counts_oov_and_dedups() {
        let m = array![[1.0, 0.0], [0.0, 1.0]];
        let (s, t) = (emb("s", m.clone()), emb("t", m));
        let text = "s0 t0\ns0\tt0\ns0 t1\ns1 nope\nzz t0\n\n";
        let g = read_gold(text.as_bytes(), &s, &t).unwrap();
        assert_eq!(g.n_sources(), 1);
        assert_eq!(g.entries()[&0].len(), 2);
        assert_eq!(g.n_skipped_oov(), 2);
        assert_eq!(g.total_sources(), 3);
        assert!(matches!(read_gold("zz t0\n".as_bytes(), &s, &t), Err(Error::Empty(_))));
    }

    #[test]
    fn translate_clamps_and_sorts() {
        let m = array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]];
        let (s, t) = (emb("s", m.clone()), emb("t", m));
        let out = translate(&identity_state(2), &s, &t, "s2", 10, RetrievalMode::Csls, CslsParams::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].0, "t2");
        assert!(out.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(matches!(
            translate(&identity_state(2), &s, &t, "nope", 1, RetrievalMode::Csls, CslsParams::default()),
            Err(Error::OutOfVocabulary(_))
        ));
    }

    #[test]
    fn json_fields() {
        let r = EvalReport {
            p_at: [(1, 50.0), (5, 75.0), (10, 100.0)].into_iter().collect(),
            n_evaluated: 4,
            n_skipped_oov: 1,
            mode: RetrievalMode::Csls,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["p1"], 50.0);
        assert_eq!(v["n"], 4);
        assert_eq!(v["oov"], 1);
        assert_eq!(v["mode"], "csls");
        assert!(r.check_integrity(5).is_ok());
        assert!(r.check_integrity(4).is_err());
    }
}
