use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// A bias-free linear map `y = W x`, stored as an `out × in` weight matrix.
///
/// Batches are row-major: a `b × in` batch maps to `b × out` via `batch · Wᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    weight: Array2<f64>,
}

impl LinearMap {
    pub fn new(weight: Array2<f64>) -> Result<Self> {
        if !weight.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "linear map weights must be finite".into(),
            ));
        }
        Ok(LinearMap { weight })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LinearMap {
            weight: Array2::zeros((out_dim, in_dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap {
            weight: Array2::eye(dim),
        }
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        LinearMap {
            weight: Array2::from_shape_simple_fn((out_dim, in_dim), || dist.sample(rng)),
        }
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weight
    }

    pub fn into_weight(self) -> Array2<f64> {
        self.weight
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        if batch.ncols() != self.in_dim() {
            return Err(Error::shape(
                "linear forward",
                format!("batch width {}", self.in_dim()),
                format!("batch width {}", batch.ncols()),
            ));
        }
        Ok(batch.dot(&self.weight.t()))
    }

    /// Gradient of a scalar loss with respect to the weight, given the
    /// forward input and the gradient at the output.
    pub fn weight_grad(input: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> Array2<f64> {
        grad_out.t().dot(&input)
    }

    /// Gradient with respect to the forward input.
    pub fn input_grad(&self, grad_out: ArrayView2<f64>) -> Array2<f64> {
        grad_out.dot(&self.weight)
    }
}

/// Affine layer `y = W x + b` used inside the discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform `±1/√fan_in` initialization for weights and bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Dense {
            weight: Array2::from_shape_simple_fn((out_dim, in_dim), || dist.sample(rng)),
            bias: Array1::from_shape_simple_fn(out_dim, || dist.sample(rng)),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Array2<f64> {
        let mut out = batch.dot(&self.weight.t());
        out += &self.bias.view().insert_axis(Axis(0));
        out
    }

    pub fn backward(&self, input: ArrayView2<f64>, grad_out: ArrayView2<f64>) -> DenseGrad {
        DenseGrad {
            weight: grad_out.t().dot(&input),
            bias: grad_out.sum_axis(Axis(0)),
        }
    }

    pub fn input_grad(&self, grad_out: ArrayView2<f64>) -> Array2<f64> {
        grad_out.dot(&self.weight)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Row-wise L2 norms.
pub fn row_norms(m: ArrayView2<f64>) -> Array1<f64> {
    m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// Copy of `m` with each row scaled to unit L2 norm; zero rows are left as zero.
pub fn unit_rows(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Gathers the given rows of `m` into a new matrix.
pub fn select_rows(m: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

pub fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖W Wᵀ − I‖_F`
pub fn orthogonality_defect(w: ArrayView2<f64>) -> f64 {
    let mut g = w.dot(&w.t());
    for i in 0..g.nrows() {
        g[[i, i]] -= 1.0;
    }
    frobenius(g.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_map_is_noop() {
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]];
        let y = LinearMap::identity(3).forward(x.view()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn diagonal_map_by_hand() {
        let m = LinearMap::new(array![[2.0, 0.0], [0.0, 3.0]]).unwrap();
        let y = m.forward(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(y, array![[2.0, 3.0]]);
    }

    #[test]
    fn empty_batch_gives_empty_output() {
        let m = LinearMap::zeros(4, 3);
        let y = m.forward(Array2::<f64>::zeros((0, 3)).view()).unwrap();
        assert_eq!(y.dim(), (0, 4));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let m = LinearMap::zeros(4, 3);
        assert!(matches!(
            m.forward(Array2::<f64>::zeros((2, 5)).view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn rejects_non_finite_weights() {
        assert!(LinearMap::new(array![[f64::NAN]]).is_err());
    }
}
