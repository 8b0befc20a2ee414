//! The cycle-consistent adversarial autoencoder: model state, losses,
//! training loop and checkpoints.

pub mod checkpoint;
pub mod losses;
pub mod model;
pub mod trainer;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, RngState, Stage};
pub use losses::{
    cycle_loss, discriminator_loss, generator_adv_loss, post_cycle_reconstruction_loss, total_objective,
    DirectionLosses, GeneratorGrads, MapperPairGrads, PostCycleGrads,
};
pub use model::{orthogonalize, orthogonalize_in_place, Direction, ModelState, Side};
pub use trainer::{critic_step, generator_step, train, train_with, StepLosses, validation_criterion, EpochLosses, TrainOutcome, TrainStatus, ValidationRecord};
