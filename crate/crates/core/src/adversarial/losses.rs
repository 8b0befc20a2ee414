//! The model's loss terms with hand-derived gradients.
//!
//! Each function returns the loss value together with gradients for exactly
//! the parameters the corresponding training step updates.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};

use super::model::{Direction, ModelState, Side};
use crate::config::{Ablation, TrainConfig};
use crate::error::{Error, Result};
use crate::tensor::linear::LinearMap;
use crate::tensor::loss::{bce_smoothed, bce_smoothed_logit_grad};
use crate::tensor::DiscGrads;

/// Discriminator of `side` on its own encoder's codes (`real`) and on codes
/// mapped over from the other language (`mapped`):
/// `BCE(D(real), 1−s) + BCE(D(mapped), s)`.
///
/// `dropout_seed` enables training-mode dropout. Only discriminator
/// parameters receive gradients.
pub fn discriminator_loss(
    state: &ModelState,
    side: Side,
    real: ArrayView2<f64>,
    mapped: ArrayView2<f64>,
    smoothing: f64,
    dropout_seed: Option<u64>,
) -> Result<(f64, DiscGrads)> {
    let disc = state.discriminator(side);
    let b_real = real.nrows();
    let batch = concatenate(Axis(0), &[real, mapped])
        .map_err(|_| Error::shape("discriminator loss", format!("width {}", real.ncols()), format!("width {}", mapped.ncols())))?;
    let cache = disc.forward(batch.view(), dropout_seed)?;
    let p_real = cache.probs.slice(s![..b_real]);
    let p_mapped = cache.probs.slice(s![b_real..]);
    let loss = bce_smoothed(p_real, true, smoothing) + bce_smoothed(p_mapped, false, smoothing);

    let mut grad_logits = Array1::zeros(batch.nrows());
    grad_logits
        .slice_mut(s![..b_real])
        .assign(&bce_smoothed_logit_grad(p_real, true, smoothing));
    grad_logits
        .slice_mut(s![b_real..])
        .assign(&bce_smoothed_logit_grad(p_mapped, false, smoothing));
    let (grads, _) = disc.backward(&cache, grad_logits.view(), true);
    Ok((loss, grads.expect("parameter gradients requested")))
}

/// Gradients of the adversarial loss for one direction.
#[derive(Clone, Debug)]
pub struct GeneratorGrads {
    pub mapper: Array2<f64>,
    /// Encoder of the direction's target language; `None` when the encoder
    /// adversary is ablated.
    pub encoder: Option<Array2<f64>>,
}

/// Adversarial loss against the target-side discriminator (kept frozen, in
/// eval mode): mapped codes are labelled real and the target encoder's own
/// codes fake, so the mapper and the target encoder both try to fool it.
///
/// `from_batch` holds embeddings of the direction's source language,
/// `to_batch` embeddings of its target language.
pub fn generator_adv_loss(
    state: &ModelState,
    dir: Direction,
    from_batch: ArrayView2<f64>,
    to_batch: ArrayView2<f64>,
    smoothing: f64,
    ablation: Ablation,
) -> Result<(f64, GeneratorGrads)> {
    let from_codes = state.encode(dir.from_side(), from_batch)?;
    let mapper = state.mapper(dir);
    let mapped = mapper.forward(from_codes.view())?;
    let to_codes = state.encode(dir.to_side(), to_batch)?;
    let disc = state.discriminator(dir.to_side());

    let b_mapped = mapped.nrows();
    let batch = concatenate(Axis(0), &[mapped.view(), to_codes.view()]).expect("equal code widths");
    let cache = disc.forward(batch.view(), None)?;
    let p_mapped = cache.probs.slice(s![..b_mapped]);
    let p_encoded = cache.probs.slice(s![b_mapped..]);
    let loss = bce_smoothed(p_mapped, true, smoothing) + bce_smoothed(p_encoded, false, smoothing);

    let mut grad_logits = Array1::zeros(batch.nrows());
    grad_logits
        .slice_mut(s![..b_mapped])
        .assign(&bce_smoothed_logit_grad(p_mapped, true, smoothing));
    grad_logits
        .slice_mut(s![b_mapped..])
        .assign(&bce_smoothed_logit_grad(p_encoded, false, smoothing));
    let (_, grad_in) = disc.backward(&cache, grad_logits.view(), false);

    let grad_mapped = grad_in.slice(s![..b_mapped, ..]);
    let mapper_grad = LinearMap::weight_grad(from_codes.view(), grad_mapped);
    let encoder = ablation.enc_adv.then(|| {
        let grad_codes = grad_in.slice(s![b_mapped.., ..]);
        LinearMap::weight_grad(to_batch, grad_codes)
    });
    Ok((
        loss,
        GeneratorGrads {
            mapper: mapper_grad,
            encoder,
        },
    ))
}

/// Gradients with respect to the direction's forward and backward mappers.
#[derive(Clone, Debug)]
pub struct MapperPairGrads {
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
}

/// `(1/b) Σ ‖z − back(fwd(z))‖` with the unsquared row norm. For
/// source-to-target, `fwd = G` and `back = F`.
///
/// Rows with an exact zero residual contribute a zero subgradient.
pub fn cycle_loss(state: &ModelState, dir: Direction, codes: ArrayView2<f64>) -> Result<(f64, MapperPairGrads)> {
    let b = codes.nrows();
    if b == 0 {
        return Err(Error::InvalidArgument("cycle loss of an empty batch".into()));
    }
    let fwd = state.mapper(dir);
    let back = state.mapper(dir.reverse());
    let there = fwd.forward(codes)?;
    let again = back.forward(there.view())?;
    let mut residual = again - codes;
    let mut loss = 0.0;
    for mut row in residual.rows_mut() {
        let norm = row.dot(&row).sqrt();
        loss += norm;
        if norm > 0.0 {
            row.mapv_inplace(|v| v / (norm * b as f64));
        } else {
            row.fill(0.0);
        }
    }
    loss /= b as f64;
    // residual now holds dL/d(again)
    let backward = LinearMap::weight_grad(there.view(), residual.view());
    let grad_there = back.input_grad(residual.view());
    let forward = LinearMap::weight_grad(codes, grad_there.view());
    Ok((loss, MapperPairGrads { forward, backward }))
}

/// Gradients of the post-cycle reconstruction loss.
#[derive(Clone, Debug)]
pub struct PostCycleGrads {
    pub encoder: Array2<f64>,
    pub decoder: Array2<f64>,
    pub forward: Array2<f64>,
    pub backward: Array2<f64>,
}

/// `(1/b) Σ ‖x − D(back(fwd(E(x))))‖²` using the autoencoder of the
/// direction's source language.
pub fn post_cycle_reconstruction_loss(
    state: &ModelState,
    dir: Direction,
    batch: ArrayView2<f64>,
) -> Result<(f64, PostCycleGrads)> {
    let b = batch.nrows();
    if b == 0 {
        return Err(Error::InvalidArgument("reconstruction loss of an empty batch".into()));
    }
    let ae = state.autoencoder(dir.from_side());
    let fwd = state.mapper(dir);
    let back = state.mapper(dir.reverse());
    let codes = ae.encode(batch)?;
    let there = fwd.forward(codes.view())?;
    let again = back.forward(there.view())?;
    let recon = ae.decode(again.view())?;
    let mut diff = recon - batch;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / b as f64;
    diff.mapv_inplace(|v| v * 2.0 / b as f64);

    let decoder = LinearMap::weight_grad(again.view(), diff.view());
    let g_again = ae.decoder.input_grad(diff.view());
    let backward = LinearMap::weight_grad(there.view(), g_again.view());
    let g_there = back.input_grad(g_again.view());
    let forward = LinearMap::weight_grad(codes.view(), g_there.view());
    let g_codes = fwd.input_grad(g_there.view());
    let encoder = LinearMap::weight_grad(batch, g_codes.view());
    Ok((
        loss,
        PostCycleGrads {
            encoder,
            decoder,
            forward,
            backward,
        },
    ))
}

/// Loss terms of one mapping direction on a pair of batches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionLosses {
    pub adversarial: f64,
    pub cycle: f64,
    pub reconstruction: f64,
}

impl DirectionLosses {
    pub fn evaluate(
        state: &ModelState,
        dir: Direction,
        from_batch: ArrayView2<f64>,
        to_batch: ArrayView2<f64>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let (adversarial, _) = generator_adv_loss(
            state,
            dir,
            from_batch,
            to_batch,
            cfg.generator_smoothing_value(),
            cfg.ablation,
        )?;
        let codes = state.encode(dir.from_side(), from_batch)?;
        let (cycle, _) = cycle_loss(state, dir, codes.view())?;
        let (reconstruction, _) = post_cycle_reconstruction_loss(state, dir, from_batch)?;
        Ok(DirectionLosses {
            adversarial,
            cycle,
            reconstruction,
        })
    }

    /// `L_adv + λ₁·L_cyc + λ₂·L_rec`; ablated terms are dropped.
    pub fn weighted_total(&self, cfg: &TrainConfig) -> f64 {
        let cyc = if cfg.ablation.cycle { cfg.lambda_cyc * self.cycle } else { 0.0 };
        let rec = if cfg.ablation.recon { cfg.lambda_rec * self.reconstruction } else { 0.0 };
        self.adversarial + cyc + rec
    }
}

/// Sum of both directions' weighted objectives. `x` and `y` are source and
/// target embedding batches.
pub fn total_objective(
    state: &ModelState,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let forward = DirectionLosses::evaluate(state, Direction::SourceToTarget, x, y, cfg)?;
    let backward = DirectionLosses::evaluate(state, Direction::TargetToSource, y, x, cfg)?;
    Ok(forward.weighted_total(cfg) + backward.weighted_total(cfg))
}

/// Elementwise scale used when a step's loss is weighted.
pub(crate) fn scaled(grad: &Array2<f64>, weight: f64) -> Array2<f64> {
    let mut g = grad.clone();
    Zip::from(&mut g).for_each(|v| *v *= weight);
    g
}
