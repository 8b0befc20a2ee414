//! Per-language linear autoencoder and its monolingual pretraining.

use log::{debug, warn};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::TrainConfig;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tensor::{LinearMap, Sgd};

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    /// `c × d`
    pub encoder: LinearMap,
    /// `d × c`
    pub decoder: LinearMap,
    pub lang: String,
}

#[derive(Clone, Debug)]
pub struct AutoencoderGrads {
    pub encoder: Array2<f64>,
    pub decoder: Array2<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct PretrainReport {
    pub epoch_losses: Vec<f64>,
    /// Epochs whose mean loss rose more than 10% over the previous epoch.
    pub flagged_epochs: Vec<usize>,
    /// Mean reconstruction loss over the whole vocabulary after training.
    pub final_loss: f64,
}

impl Autoencoder {
    pub fn new(encoder: LinearMap, decoder: LinearMap, lang: impl Into<String>) -> Result<Self> {
        if encoder.in_dim() != decoder.out_dim() || encoder.out_dim() != decoder.in_dim() {
            return Err(Error::shape(
                "autoencoder",
                format!("decoder {}x{}", encoder.in_dim(), encoder.out_dim()),
                format!("decoder {}x{}", decoder.out_dim(), decoder.in_dim()),
            ));
        }
        Ok(Autoencoder {
            encoder,
            decoder,
            lang: lang.into(),
        })
    }

    /// Weights uniform in `[-1/√d, 1/√d]`.
    pub fn random<R: Rng + ?Sized>(d: usize, c: usize, lang: impl Into<String>, rng: &mut R) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        Autoencoder {
            encoder: LinearMap::uniform(c, d, bound, rng),
            decoder: LinearMap::uniform(d, c, bound, rng),
            lang: lang.into(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward(batch)
    }

    pub fn decode(&self, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.decoder.forward(codes)
    }

    pub fn reconstruction_loss(&self, batch: ArrayView2<f64>) -> Result<f64> {
        if batch.nrows() == 0 {
            return Err(Error::InvalidArgument("reconstruction loss of an empty batch".into()));
        }
        let recon = self.decode(self.encode(batch)?.view())?;
        let diff = recon - batch;
        Ok(diff.iter().map(|v| v * v).sum::<f64>() / batch.nrows() as f64)
    }

    /// Loss and gradients of the mean squared reconstruction error.
    pub fn reconstruction_grad(&self, batch: ArrayView2<f64>) -> Result<(f64, AutoencoderGrads)> {
        let b = batch.nrows();
        if b == 0 {
            return Err(Error::InvalidArgument("reconstruction loss of an empty batch".into()));
        }
        let codes = self.encode(batch)?;
        let recon = self.decode(codes.view())?;
        let diff = recon - batch;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / b as f64;
        let grad_recon = diff * (2.0 / b as f64);
        let decoder = LinearMap::weight_grad(codes.view(), grad_recon.view());
        let grad_codes = self.decoder.input_grad(grad_recon.view());
        let encoder = LinearMap::weight_grad(batch, grad_codes.view());
        Ok((loss, AutoencoderGrads { encoder, decoder }))
    }

    pub fn is_finite(&self) -> bool {
        self.encoder
            .weight()
            .iter()
            .chain(self.decoder.weight().iter())
            .all(|v| v.is_finite())
    }

    /// Minimizes the reconstruction loss with SGD over shuffled minibatches.
    pub fn pretrain<R: Rng + ?Sized>(
        &mut self,
        emb: &EmbeddingMatrix,
        epochs: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<PretrainReport> {
        if epochs == 0 {
            return Err(Error::InvalidArgument("pretraining needs at least one epoch".into()));
        }
        if emb.dim() != self.embed_dim() {
            return Err(Error::shape(
                "autoencoder pretraining",
                format!("embedding dim {}", self.embed_dim()),
                format!("embedding dim {}", emb.dim()),
            ));
        }
        if emb.is_empty() {
            return Err(Error::Empty("no embeddings to pretrain on".into()));
        }
        let opt = Sgd::new(cfg.lr, 1.0)?;
        let data = emb.vectors();
        let mut order: Vec<usize> = (0..emb.len()).collect();
        let mut report = PretrainReport::default();
        for epoch in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let batch = data.select(Axis(0), chunk);
                let (loss, grads) = self.reconstruction_grad(batch.view())?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "{} autoencoder loss became {loss} in pretraining epoch {}",
                        self.lang,
                        epoch + 1
                    )));
                }
                opt.step(self.encoder.weight_mut(), &grads.encoder)?;
                opt.step(self.decoder.weight_mut(), &grads.decoder)?;
                total += loss;
                batches += 1;
            }
            let mean = total / batches as f64;
            if let Some(&prev) = report.epoch_losses.last() {
                if mean > prev * 1.1 {
                    warn!(
                        "{} autoencoder loss rose from {prev:.6} to {mean:.6} in epoch {}",
                        self.lang,
                        epoch + 1
                    );
                    report.flagged_epochs.push(epoch + 1);
                }
            }
            debug!("pretrain {} epoch {} loss {mean:.6}", self.lang, epoch + 1);
            report.epoch_losses.push(mean);
        }
        report.final_loss = self.reconstruction_loss(data)?;
        if !report.final_loss.is_finite() || !self.is_finite() {
            return Err(Error::Divergence(format!("{} autoencoder diverged", self.lang)));
        }
        Ok(report)
    }
}
