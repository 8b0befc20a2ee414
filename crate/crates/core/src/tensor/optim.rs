use ndarray::{Array, Dimension};

use crate::error::{Error, Result};

/// Plain SGD with multiplicative learning-rate decay.
///
/// The effective rate after `k` decay events is `lr₀ · decay^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    initial_lr: f64,
    decay: f64,
    decay_events: u32,
}

impl Sgd {
    pub fn new(initial_lr: f64, decay: f64) -> Result<Self> {
        if !(initial_lr > 0.0 && initial_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {initial_lr}")));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1], got {decay}")));
        }
        Ok(Sgd {
            initial_lr,
            decay,
            decay_events: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.initial_lr * self.decay.powi(self.decay_events as i32)
    }

    pub fn decay_events(&self) -> u32 {
        self.decay_events
    }

    pub fn set_decay_events(&mut self, events: u32) {
        self.decay_events = events;
    }

    pub fn apply_decay(&mut self) {
        self.decay_events += 1;
    }

    /// `param ← param − scale · lr · grad`
    pub fn step_scaled<D: Dimension>(
        &self,
        param: &mut Array<f64, D>,
        grad: &Array<f64, D>,
        scale: f64,
    ) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::shape(
                "sgd step",
                format!("{:?}", param.shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        param.scaled_add(-self.lr() * scale, grad);
        Ok(())
    }

    pub fn step<D: Dimension>(&self, param: &mut Array<f64, D>, grad: &Array<f64, D>) -> Result<()> {
        self.step_scaled(param, grad, 1.0)
    }
}
