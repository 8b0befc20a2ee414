//! Unsupervised bilingual lexicon induction with a cycle-consistent
//! adversarial autoencoder.
//!
//! The pipeline has four stages: pretrain one linear autoencoder per
//! language, train mappers between the two code spaces adversarially with
//! cycle-consistency and post-cycle reconstruction losses, refine the
//! mappers with iterative Procrustes on induced dictionaries, and evaluate
//! with precision@k against a gold dictionary.

pub mod adversarial;
pub mod autoencoder;
pub mod config;
pub mod dictionary;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod retrieval;
pub mod tensor;

pub use adversarial::{Direction, ModelState, Side};
pub use autoencoder::Autoencoder;
pub use config::{Ablation, TrainConfig};
pub use dictionary::Dictionary;
pub use embedding::{EmbeddingMatrix, Normalization};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, GoldDictionary};
