//! Feed-forward language discriminator: input dropout, two Leaky-ReLU hidden
//! layers and a sigmoid output giving the probability that a code came from
//! the language's own encoder.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linear::{Dense, DenseGrad};
use super::loss::{leaky_relu, leaky_relu_grad, sigmoid};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorNet {
    pub layer1: Dense,
    pub layer2: Dense,
    pub layer3: Dense,
    pub leaky_slope: f64,
    pub input_dropout: f64,
}

/// Cached intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct DiscForward {
    /// Input after dropout (equal to the raw input in eval mode).
    input: Array2<f64>,
    /// Inverted-dropout multipliers (`0` or `1/(1-p)`), present in training mode.
    mask: Option<Array2<f64>>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
    pub probs: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct DiscGrads {
    pub layer1: DenseGrad,
    pub layer2: DenseGrad,
    pub layer3: DenseGrad,
}

impl DiscGrads {
    pub fn add_assign(&mut self, other: &DiscGrads) {
        for (a, b) in [
            (&mut self.layer1, &other.layer1),
            (&mut self.layer2, &other.layer2),
            (&mut self.layer3, &other.layer3),
        ] {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

impl DiscriminatorNet {
    pub fn new<R: Rng + ?Sized>(
        code_dim: usize,
        hidden: usize,
        leaky_slope: f64,
        input_dropout: f64,
        rng: &mut R,
    ) -> Self {
        DiscriminatorNet {
            layer1: Dense::init(code_dim, hidden, rng),
            layer2: Dense::init(hidden, hidden, rng),
            layer3: Dense::init(hidden, 1, rng),
            leaky_slope,
            input_dropout,
        }
    }

    pub fn zeros(code_dim: usize, hidden: usize, leaky_slope: f64, input_dropout: f64) -> Self {
        DiscriminatorNet {
            layer1: Dense::zeros(code_dim, hidden),
            layer2: Dense::zeros(hidden, hidden),
            layer3: Dense::zeros(hidden, 1),
            leaky_slope,
            input_dropout,
        }
    }

    pub fn code_dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.layer1.out_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layer1.is_finite() && self.layer2.is_finite() && self.layer3.is_finite()
    }

    /// Probabilities for each row. When `rng` is given the net runs in
    /// training mode and input dropout is applied.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        rng: Option<&mut R>,
    ) -> Result<Array1<f64>> {
        Ok(self.forward(batch, rng.map(|r| r.next_u64()))?.probs)
    }

    /// Forward pass keeping intermediates for [`backward`](Self::backward).
    ///
    /// `dropout_seed` switches on training mode. Each row's mask is derived
    /// from the seed and the row's own bits, so outputs do not depend on
    /// batch order.
    pub fn forward(&self, batch: ArrayView2<f64>, dropout_seed: Option<u64>) -> Result<DiscForward> {
        if batch.ncols() != self.code_dim() {
            return Err(Error::shape(
                "discriminator forward",
                format!("code width {}", self.code_dim()),
                format!("code width {}", batch.ncols()),
            ));
        }
        let (input, mask) = match dropout_seed {
            Some(seed) if self.input_dropout > 0.0 => {
                let mask = dropout_mask(batch, self.input_dropout, seed);
                (&batch * &mask, Some(mask))
            }
            _ => (batch.to_owned(), None),
        };
        let slope = self.leaky_slope;
        let pre1 = self.layer1.forward(input.view());
        let act1 = pre1.mapv(|v| leaky_relu(v, slope));
        let pre2 = self.layer2.forward(act1.view());
        let act2 = pre2.mapv(|v| leaky_relu(v, slope));
        let logits = self.layer3.forward(act2.view());
        let probs = logits.column(0).mapv(sigmoid);
        Ok(DiscForward {
            input,
            mask,
            pre1,
            act1,
            pre2,
            act2,
            probs,
        })
    }

    /// Backpropagates `dL/dlogit` through the cached pass. Parameter
    /// gradients are skipped when `with_params` is false (frozen net);
    /// the gradient with respect to the raw (pre-dropout) input is always
    /// returned.
    pub fn backward(
        &self,
        cache: &DiscForward,
        grad_logits: ArrayView1<f64>,
        with_params: bool,
    ) -> (Option<DiscGrads>, Array2<f64>) {
        let slope = self.leaky_slope;
        let g3 = grad_logits.insert_axis(Axis(1));
        let layer3 = with_params.then(|| self.layer3.backward(cache.act2.view(), g3));
        let mut g2 = self.layer3.input_grad(g3);
        Zip::from(&mut g2)
            .and(&cache.pre2)
            .for_each(|g, &z| *g *= leaky_relu_grad(z, slope));
        let layer2 = with_params.then(|| self.layer2.backward(cache.act1.view(), g2.view()));
        let mut g1 = self.layer2.input_grad(g2.view());
        Zip::from(&mut g1)
            .and(&cache.pre1)
            .for_each(|g, &z| *g *= leaky_relu_grad(z, slope));
        let layer1 = with_params.then(|| self.layer1.backward(cache.input.view(), g1.view()));
        let mut g_in = self.layer1.input_grad(g1.view());
        if let Some(mask) = &cache.mask {
            g_in *= mask;
        }
        let grads = match (layer1, layer2, layer3) {
            (Some(layer1), Some(layer2), Some(layer3)) => Some(DiscGrads {
                layer1,
                layer2,
                layer3,
            }),
            _ => None,
        };
        (grads, g_in)
    }

    pub fn apply_grads(&mut self, grads: &DiscGrads, lr: f64) {
        for (layer, g) in [
            (&mut self.layer1, &grads.layer1),
            (&mut self.layer2, &grads.layer2),
            (&mut self.layer3, &grads.layer3),
        ] {
            layer.weight.scaled_add(-lr, &g.weight);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }
}

/// Inverted-dropout multipliers: each entry is `0` with probability `p`,
/// otherwise `1/(1-p)`.
pub fn dropout_mask(batch: ArrayView2<f64>, p: f64, seed: u64) -> Array2<f64> {
    let keep_scale = 1.0 / (1.0 - p);
    let mut mask = Array2::zeros(batch.raw_dim());
    for (row, mut out) in batch.rows().into_iter().zip(mask.rows_mut()) {
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed(seed, row));
        for m in out.iter_mut() {
            *m = if rng.random::<f64>() < p { 0.0 } else { keep_scale };
        }
    }
    mask
}

fn row_seed(seed: u64, row: ArrayView1<f64>) -> u64 {
    // splitmix64 over the row's bit patterns
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in row.iter() {
        h ^= v.to_bits();
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}
