//! Synthetic bilingual benchmark with a known ground-truth rotation.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// Distribution of the latent source rows (before unit normalization).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthStructure {
    /// i.i.d. standard Gaussian rows. Rotation invariant, so the mapping is
    /// not recoverable from the two distributions alone.
    Isotropic,
    /// Coordinate `j` is a centered unit exponential scaled by
    /// `(j + 1)^-exponent`: a decaying spectrum with skewed marginals, which
    /// leaves no non-trivial rotation mapping the distribution onto itself.
    SkewedSpectrum { exponent: f64 },
}

impl Default for SynthStructure {
    fn default() -> Self {
        SynthStructure::SkewedSpectrum { exponent: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub structure: SynthStructure,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, noise_sigma: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            d,
            noise_sigma,
            seed,
            structure: SynthStructure::default(),
        }
    }

    pub fn with_structure(mut self, structure: SynthStructure) -> Self {
        self.structure = structure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d < 2 {
            return Err(Error::InvalidArgument(format!(
                "synthetic benchmark needs n >= 2 and d >= 2, got n={} d={}",
                self.n, self.d
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if let SynthStructure::SkewedSpectrum { exponent } = self.structure {
            if !(exponent >= 0.0 && exponent.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad spectrum exponent {exponent}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthPair {
    pub source: EmbeddingMatrix,
    pub target: EmbeddingMatrix,
    /// Gold pairs `(source row, target row)`, one per source word.
    pub gold: Dictionary,
    /// Orthogonal `d × d` map with `target_i ≈ rotation · source_i`, i.e.
    /// noiseless target rows equal `source · rotationᵀ`.
    pub rotation: Array2<f64>,
}

/// Source rows are drawn from the configured structure and unit-normalized;
/// target rows are the rotated source rows plus Gaussian noise,
/// re-normalized and stored in a shuffled order. Source word `s{i}`
/// translates to target word `t{i}`.
pub fn synth_pair(spec: &SynthSpec) -> Result<SynthPair> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut source = match spec.structure {
        SynthStructure::Isotropic => {
            Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
        }
        SynthStructure::SkewedSpectrum { exponent } => {
            let scales: Array1<f64> = (0..d).map(|j| ((j + 1) as f64).powf(-exponent)).collect();
            let mut m = Array2::zeros((n, d));
            for mut row in m.rows_mut() {
                for (v, s) in row.iter_mut().zip(scales.iter()) {
                    let e: f64 = Exp1.sample(&mut rng);
                    *v = (e - 1.0) * s;
                }
            }
            m
        }
    };
    for mut row in source.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("sampled a zero source row".into()));
        }
        row.mapv_inplace(|v| v / norm);
    }

    let rotation = random_orthogonal(d, &mut rng);
    let mut rotated = source.dot(&rotation.t());
    if spec.noise_sigma > 0.0 {
        for v in rotated.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * z;
        }
    }
    for mut row in rotated.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("noise produced a zero target row".into()));
        }
        row.mapv_inplace(|v| v / norm);
    }

    // target row r holds the translation of source word order[r]
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut position = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        position[i] = r;
    }
    let target_rows = rotated.select(ndarray::Axis(0), &order);

    let source_words = (0..n).map(|i| format!("s{i}")).collect();
    let target_words = order.iter().map(|i| format!("t{i}")).collect();
    let gold = Dictionary::new((0..n).map(|i| (i, position[i])).collect(), "src", "tgt")?;

    Ok(SynthPair {
        source: EmbeddingMatrix::new(source_words, source, "src")?,
        target: EmbeddingMatrix::new(target_words, target_rows, "tgt")?,
        gold,
        rotation,
    })
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub(crate) fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((d, d), |(i, j)| {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * sign
    })
}
