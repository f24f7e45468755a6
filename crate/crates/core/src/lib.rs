//! Cross-domain, label-adaptive stance detection.
//!
//! Corpus loading and statistics, a unified label space with hard label
//! groups, label-name embeddings, a mixture-of-label-experts model with its
//! trainer, out-of-domain label mapping and evaluation utilities.

pub mod autograd;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod error;
pub mod io;
pub mod labelspace;
pub mod model;
pub mod ood;
pub mod synthetic;
pub mod text;
pub mod trainer;

pub use error::{Result, StanceError};
