//! Numerical kernel: linear maps, the discriminator network, loss
//! primitives and SGD. Gradients are written out by hand for the handful of
//! fixed graphs the model uses.

pub mod discriminator;
pub mod linear;
pub mod loss;
pub mod optim;

pub use discriminator::{DiscForward, DiscGrads, DiscriminatorNet};
pub use linear::{Dense, DenseGrad, LinearMap};
pub use loss::{bce_smoothed, bce_smoothed_logit_grad, leaky_relu, sigmoid, PROB_CLAMP};
pub use optim::Sgd;
