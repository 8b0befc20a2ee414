//! Nearest-neighbor retrieval, dictionary induction and Procrustes refinement.

pub mod csls;
pub mod induce;
pub mod procrustes;
pub mod refine;

pub use csls::{csls_scores, CslsParams, RetrievalMode, SimilarityIndex};
pub use induce::build_dictionary;
pub use procrustes::procrustes;
pub use refine::{refine, RefineOutcome};
