//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use lexalign::adversarial::ModelState;
use lexalign::tensor::linear::LinearMap;
use lexalign::TrainConfig;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix by Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = gaussian(n, n, rng);
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut v = g.column(j).to_owned();
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k).to_owned();
                let proj = qk.dot(&v);
                v.scaled_add(-proj, &qk);
            }
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

/// Small random model with generic (non-identity) mappers.
pub fn random_state(d_src: usize, d_tgt: usize, c: usize, hidden: usize, seed: u64) -> ModelState {
    let cfg = TrainConfig {
        code_dim: c,
        disc_hidden: hidden,
        ..Default::default()
    };
    let mut r = rng(seed);
    let mut state = ModelState::init(d_src, d_tgt, "aa", "bb", &cfg, &mut r);
    state.mapper_g = LinearMap::new(Array2::eye(c) + gaussian(c, c, &mut r) * 0.3).unwrap();
    state.mapper_f = LinearMap::new(Array2::eye(c) + gaussian(c, c, &mut r) * 0.3).unwrap();
    state
}

/// Naive CSLS scores by explicit double loops over cosine similarities.
pub fn brute_csls(mapped: ArrayView2<f64>, tgt: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let (n, m) = (mapped.nrows(), tgt.nrows());
    let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for i in 0..a.len() {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        dot / (na.sqrt() * nb.sqrt())
    };
    let mut c = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            c[[i, j]] = cos(mapped.row(i), tgt.row(j));
        }
    }
    let mean_top = |mut v: Vec<f64>| {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v[..k].iter().sum::<f64>() / k as f64
    };
    let r_t: Vec<f64> = (0..n).map(|i| mean_top(c.row(i).to_vec())).collect();
    let r_s: Vec<f64> = (0..m).map(|j| mean_top(c.column(j).to_vec())).collect();
    let mut out = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            out[[i, j]] = 2.0 * c[[i, j]] - r_t[i] - r_s[j];
        }
    }
    out
}

/// First index of the maximum of each row.
pub fn brute_argmax_rows(s: &Array2<f64>) -> Vec<usize> {
    s.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Central finite-difference gradient of `f` with respect to every entry of
/// `param`, which is restored afterwards.
pub fn numeric_grad<F>(param: &mut Array2<f64>, mut f: F) -> Array2<f64>
where
    F: FnMut(&Array2<f64>) -> f64,
{
    let h = 1e-6;
    let mut g = Array2::zeros(param.raw_dim());
    for idx in 0..param.len() {
        let (r, c) = (idx / param.ncols(), idx % param.ncols());
        let orig = param[[r, c]];
        param[[r, c]] = orig + h;
        let plus = f(param);
        param[[r, c]] = orig - h;
        let minus = f(param);
        param[[r, c]] = orig;
        g[[r, c]] = (plus - minus) / (2.0 * h);
    }
    g
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt() + b.mapv(|v| v * v).sum().sqrt();
    diff / scale.max(1e-12)
}

pub fn frob(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn orth_defect(w: ArrayView2<f64>) -> f64 {
    let n = w.nrows();
    frob((w.dot(&w.t()) - Array2::<f64>::eye(n)).view())
}
