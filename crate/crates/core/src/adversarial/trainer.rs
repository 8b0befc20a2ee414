use log::{info, warn};
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{cycle_loss, discriminator_loss, generator_adv_loss, post_cycle_reconstruction_loss, scaled};
use super::model::{orthogonalize_in_place, Direction, ModelState, Side};
use crate::config::TrainConfig;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::retrieval::csls::{CslsParams, SimilarityIndex, RetrievalMode};
use crate::tensor::Sgd;

/// Per-epoch means of each loss component. Ablated components are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub discriminator: f64,
    pub adversarial: f64,
    pub cycle: Option<f64>,
    pub reconstruction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub criterion: f64,
    pub is_best: bool,
    pub losses: EpochLosses,
}

impl ValidationRecord {
    /// `epoch  disc  adv  cyc  rec  criterion  best`, tab-separated.
    pub fn log_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}\t{:.6}\t{}",
            self.epoch,
            self.losses.discriminator,
            self.losses.adversarial,
            opt(self.losses.cycle),
            opt(self.losses.reconstruction),
            self.criterion,
            if self.is_best { "*" } else { "" }
        )
    }

    pub const LOG_HEADER: &'static str = "epoch\tdisc\tadv\tcycle\trecon\tcriterion\tbest";
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// Training stopped on a non-finite loss or parameter.
    Diverged(String),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ModelState,
    /// 0 when no epoch beat the starting state.
    pub best_epoch: usize,
    pub best_criterion: f64,
    pub initial_criterion: f64,
    pub history: Vec<ValidationRecord>,
    pub status: TrainStatus,
}

/// Mean cosine between the mapped codes of the most frequent source words
/// and their CSLS-nearest target codes.
pub fn validation_criterion(
    state: &ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    cfg: &TrainConfig,
) -> Result<f64> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Empty("validation needs non-empty vocabularies".into()));
    }
    let top = if src.len() < cfg.valid_vocab_top {
        warn!(
            "source vocabulary ({}) is smaller than valid_vocab_top ({}); validating on all of it",
            src.len(),
            cfg.valid_vocab_top
        );
        src.len()
    } else {
        cfg.valid_vocab_top
    };
    let queries = state.encode_and_map(Direction::SourceToTarget, src.vectors().slice(ndarray::s![..top, ..]))?;
    let targets = state.encode(Side::Target, tgt.vectors())?;
    let k = cfg.csls_k.min(top).min(tgt.len());
    let index = SimilarityIndex::new(queries.view(), targets.view(), RetrievalMode::Csls, CslsParams { k_neighbors: k })?;
    let nearest = index.nearest_targets();
    let total: f64 = nearest.iter().enumerate().map(|(q, &t)| index.cosine(q, t)).sum();
    Ok((total / top as f64).clamp(-1.0, 1.0))
}

struct Pools {
    src: usize,
    tgt: usize,
}

fn sample(data: ArrayView2<f64>, pool: usize, batch: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..pool)).collect();
    data.select(Axis(0), &idx)
}

#[derive(Default)]
struct Accum {
    disc: f64,
    disc_n: usize,
    adv: f64,
    cyc: f64,
    rec: f64,
    gen_n: usize,
}

/// Runs the adversarial game for `cfg.n_epochs` epochs and returns the state
/// with the best validation criterion. `state` is consumed; its autoencoders
/// should already be pretrained.
pub fn train(
    state: ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    train_with(state, src, tgt, cfg, rng, |_, _| Ok(()))
}

/// As [`train`], calling `on_epoch` after each epoch's validation with the
/// record and the current state.
pub fn train_with<F>(
    mut state: ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&ValidationRecord, &ModelState) -> Result<()>,
{
    cfg.validate()?;
    state.validate()?;
    if src.dim() != state.ae_src.embed_dim() || tgt.dim() != state.ae_tgt.embed_dim() {
        return Err(Error::shape(
            "training data",
            format!("dims {}/{}", state.ae_src.embed_dim(), state.ae_tgt.embed_dim()),
            format!("dims {}/{}", src.dim(), tgt.dim()),
        ));
    }
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Empty("training needs non-empty vocabularies".into()));
    }
    let pools = Pools {
        src: cfg.disc_vocab_top.min(src.len()),
        tgt: cfg.disc_vocab_top.min(tgt.len()),
    };
    let iters = cfg.iterations_per_epoch(pools.src.max(pools.tgt));
    let mut opt = Sgd::new(cfg.lr, cfg.lr_decay)?;

    let initial_criterion = validation_criterion(&state, src, tgt, cfg)?;
    let mut best = state.clone();
    let mut best_epoch = 0;
    let mut best_criterion = initial_criterion;
    let mut history = Vec::with_capacity(cfg.n_epochs);
    info!("initial validation criterion {initial_criterion:.6}");
    info!("{}", ValidationRecord::LOG_HEADER);

    for epoch in 1..=cfg.n_epochs {
        let mut acc = Accum::default();
        for _ in 0..iters {
            if let Err(e) = iteration(&mut state, src, tgt, &pools, cfg, &opt, rng, &mut acc) {
                return match e {
                    Error::Divergence(msg) => {
                        warn!("epoch {epoch}: {msg}; keeping the best state so far");
                        Ok(TrainOutcome {
                            best,
                            best_epoch,
                            best_criterion,
                            initial_criterion,
                            history,
                            status: TrainStatus::Diverged(msg),
                        })
                    }
                    other => Err(other),
                };
            }
        }
        let criterion = validation_criterion(&state, src, tgt, cfg)?;
        let is_best = criterion > best_criterion;
        if is_best {
            best = state.clone();
            best_epoch = epoch;
            best_criterion = criterion;
        }
        let gen_n = acc.gen_n.max(1) as f64;
        let record = ValidationRecord {
            epoch,
            criterion,
            is_best,
            losses: EpochLosses {
                discriminator: acc.disc / acc.disc_n.max(1) as f64,
                adversarial: acc.adv / gen_n,
                cycle: cfg.ablation.cycle.then(|| acc.cyc / gen_n),
                reconstruction: (cfg.ablation.cycle && cfg.ablation.recon).then(|| acc.rec / gen_n),
            },
        };
        info!("{}", record.log_line());
        on_epoch(&record, &state)?;
        history.push(record);
        opt.apply_decay();
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        best_criterion,
        initial_criterion,
        history,
        status: TrainStatus::Completed,
    })
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence(format!("{what} loss became {value}")))
    }
}

fn embeddings<'a>(side: Side, src: &'a EmbeddingMatrix, tgt: &'a EmbeddingMatrix) -> &'a EmbeddingMatrix {
    match side {
        Side::Source => src,
        Side::Target => tgt,
    }
}

fn pool(side: Side, pools: &Pools) -> usize {
    match side {
        Side::Source => pools.src,
        Side::Target => pools.tgt,
    }
}

#[allow(clippy::too_many_arguments)]
fn iteration(
    state: &mut ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    pools: &Pools,
    cfg: &TrainConfig,
    opt: &Sgd,
    rng: &mut ChaCha8Rng,
    acc: &mut Accum,
) -> Result<()> {
    let b = cfg.batch_size;
    let lr = opt.lr();

    for _ in 0..cfg.n_critics {
        for side in [Side::Source, Side::Target] {
            let other = side.other();
            let real_x = sample(embeddings(side, src, tgt).vectors(), pool(side, pools), b, rng);
            let from_x = sample(embeddings(other, src, tgt).vectors(), pool(other, pools), b, rng);
            let seed: u64 = rng.random();
            let loss = critic_step(state, side, real_x.view(), from_x.view(), cfg, lr, seed)?;
            acc.disc += finite(loss, "discriminator")?;
            acc.disc_n += 1;
        }
    }

    for dir in Direction::BOTH {
        let from_x = sample(embeddings(dir.from_side(), src, tgt).vectors(), pool(dir.from_side(), pools), b, rng);
        let to_x = sample(embeddings(dir.to_side(), src, tgt).vectors(), pool(dir.to_side(), pools), b, rng);
        let losses = generator_step(state, dir, from_x.view(), to_x.view(), cfg, opt)?;
        acc.adv += finite(losses.adversarial, "adversarial")?;
        if let Some(c) = losses.cycle {
            acc.cyc += finite(c, "cycle")?;
        }
        if let Some(r) = losses.reconstruction {
            acc.rec += finite(r, "reconstruction")?;
        }
        acc.gen_n += 1;
    }
    if !state.is_finite() {
        return Err(Error::Divergence("a parameter became non-finite".into()));
    }
    Ok(())
}

/// Losses observed during one direction's generator pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub adversarial: f64,
    pub cycle: Option<f64>,
    pub reconstruction: Option<f64>,
}

/// One SGD update of the discriminator of `side`: its own language's
/// embeddings `real_x` against `from_x` from the other language, encoded
/// and mapped over. Only that discriminator changes.
pub fn critic_step(
    state: &mut ModelState,
    side: Side,
    real_x: ArrayView2<f64>,
    from_x: ArrayView2<f64>,
    cfg: &TrainConfig,
    lr: f64,
    dropout_seed: u64,
) -> Result<f64> {
    let real = state.encode(side, real_x)?;
    let mapped = state.encode_and_map(Direction::leaving(side.other()), from_x)?;
    let (loss, grads) = discriminator_loss(state, side, real.view(), mapped.view(), cfg.smoothing, Some(dropout_seed))?;
    state.discriminator_mut(side).apply_grads(&grads, lr);
    Ok(loss)
}

/// The generator updates of one direction, in order: adversarial (mapper
/// and opposite encoder), cycle (both mappers, weighted by `lambda_cyc`),
/// post-cycle reconstruction (both mappers and the source-side autoencoder,
/// weighted by `lambda_rec`), then one orthogonalization of both mappers.
/// Discriminators are left untouched.
pub fn generator_step(
    state: &mut ModelState,
    dir: Direction,
    from_x: ArrayView2<f64>,
    to_x: ArrayView2<f64>,
    cfg: &TrainConfig,
    opt: &Sgd,
) -> Result<StepLosses> {
    let (adversarial, grads) =
        generator_adv_loss(state, dir, from_x, to_x, cfg.generator_smoothing_value(), cfg.ablation)?;
    opt.step(state.mapper_mut(dir).weight_mut(), &grads.mapper)?;
    if let Some(g) = &grads.encoder {
        opt.step(state.autoencoder_mut(dir.to_side()).encoder.weight_mut(), g)?;
    }

    let mut out = StepLosses {
        adversarial,
        cycle: None,
        reconstruction: None,
    };
    if cfg.ablation.cycle {
        let codes = state.encode(dir.from_side(), from_x)?;
        let (cyc, g) = cycle_loss(state, dir, codes.view())?;
        out.cycle = Some(cyc);
        opt.step(state.mapper_mut(dir).weight_mut(), &scaled(&g.forward, cfg.lambda_cyc))?;
        opt.step(state.mapper_mut(dir.reverse()).weight_mut(), &scaled(&g.backward, cfg.lambda_cyc))?;

        if cfg.ablation.recon {
            let (rec, g) = post_cycle_reconstruction_loss(state, dir, from_x)?;
            out.reconstruction = Some(rec);
            let w = cfg.lambda_rec;
            opt.step(state.mapper_mut(dir).weight_mut(), &scaled(&g.forward, w))?;
            opt.step(state.mapper_mut(dir.reverse()).weight_mut(), &scaled(&g.backward, w))?;
            let ae = state.autoencoder_mut(dir.from_side());
            opt.step(ae.encoder.weight_mut(), &scaled(&g.encoder, w))?;
            opt.step(ae.decoder.weight_mut(), &scaled(&g.decoder, w))?;
        }
    }

    orthogonalize_in_place(&mut state.mapper_g, cfg.beta_ortho)?;
    orthogonalize_in_place(&mut state.mapper_f, cfg.beta_ortho)?;
    Ok(out)
}
