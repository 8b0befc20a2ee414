use serde::{Deserialize, Serialize};

use crate::embedding::Normalization;
use crate::error::{Error, Result};

/// Which regularizers and generator roles are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Target encoder also plays the generator on the adversarial loss.
    pub enc_adv: bool,
    /// Post-cycle reconstruction updates.
    pub recon: bool,
    /// Cycle-consistency updates.
    pub cycle: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        enc_adv: true,
        recon: true,
        cycle: true,
    };
    /// Full model without the encoder adversary.
    pub const NO_ENC_ADV: Ablation = Ablation {
        enc_adv: false,
        recon: true,
        cycle: true,
    };
    /// Additionally without post-cycle reconstruction.
    pub const NO_ENC_ADV_RECON: Ablation = Ablation {
        enc_adv: false,
        recon: false,
        cycle: true,
    };
    /// Adversarial mapper only, in code space.
    pub const ADVERSARIAL_ONLY: Ablation = Ablation {
        enc_adv: false,
        recon: false,
        cycle: false,
    };
}

/// Every hyperparameter of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub code_dim: usize,
    pub normalize: Normalization,
    pub max_vocab: usize,

    pub pretrain_epochs: usize,

    pub lambda_cyc: f64,
    pub lambda_rec: f64,
    pub smoothing: f64,
    /// Apply `smoothing` to the generator's targets too.
    pub generator_smoothing: bool,
    pub n_critics: usize,
    pub n_epochs: usize,
    /// Defaults to `ceil(min(disc_vocab_top, vocab) / batch_size)` when unset.
    pub iters_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta_ortho: f64,
    pub disc_vocab_top: usize,
    pub valid_vocab_top: usize,
    pub disc_hidden: usize,
    pub disc_dropout: f64,
    pub leaky_slope: f64,
    pub ablation: Ablation,

    pub csls_k: usize,
    pub refine_iters: usize,
    pub refine_top_n: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            code_dim: 350,
            normalize: Normalization::Unit,
            max_vocab: crate::embedding::DEFAULT_MAX_VOCAB,
            pretrain_epochs: 5,
            lambda_cyc: 5.0,
            lambda_rec: 1.0,
            smoothing: 0.2,
            generator_smoothing: false,
            n_critics: 5,
            n_epochs: 5,
            iters_per_epoch: None,
            batch_size: 32,
            lr: 0.1,
            lr_decay: 0.98,
            beta_ortho: 0.01,
            disc_vocab_top: 75_000,
            valid_vocab_top: 10_000,
            disc_hidden: 2048,
            disc_dropout: 0.1,
            leaky_slope: 0.2,
            ablation: Ablation::FULL,
            csls_k: 10,
            refine_iters: 5,
            refine_top_n: 15_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.code_dim == 0 {
            return fail("code_dim must be positive".into());
        }
        if !(self.lambda_cyc >= 0.0 && self.lambda_rec >= 0.0) {
            return fail(format!(
                "loss weights must be non-negative (lambda_cyc={}, lambda_rec={})",
                self.lambda_cyc, self.lambda_rec
            ));
        }
        if !(0.0..0.5).contains(&self.smoothing) {
            return fail(format!("smoothing must lie in [0, 0.5), got {}", self.smoothing));
        }
        if self.n_critics == 0 {
            return fail("n_critics must be at least 1".into());
        }
        if !(self.beta_ortho > 0.0 && self.beta_ortho < 1.0) {
            return fail(format!("beta_ortho must lie in (0, 1), got {}", self.beta_ortho));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(0.0..1.0).contains(&self.disc_dropout) {
            return fail(format!("disc_dropout must lie in [0, 1), got {}", self.disc_dropout));
        }
        if self.disc_hidden == 0 || self.disc_vocab_top == 0 || self.valid_vocab_top == 0 {
            return fail("disc_hidden, disc_vocab_top and valid_vocab_top must be positive".into());
        }
        if self.csls_k == 0 {
            return fail("csls_k must be at least 1".into());
        }
        if self.refine_top_n == 0 || self.max_vocab == 0 {
            return fail("refine_top_n and max_vocab must be positive".into());
        }
        if self.iters_per_epoch == Some(0) {
            return fail("iters_per_epoch must be positive when set".into());
        }
        Ok(())
    }

    pub fn iterations_per_epoch(&self, vocab: usize) -> usize {
        self.iters_per_epoch.unwrap_or_else(|| {
            let pool = self.disc_vocab_top.min(vocab).max(1);
            pool.div_ceil(self.batch_size)
        })
    }

    pub fn generator_smoothing_value(&self) -> f64 {
        if self.generator_smoothing {
            self.smoothing
        } else {
            0.0
        }
    }
}
