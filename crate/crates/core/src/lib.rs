//! Learnable evolutionary operators built from attention.
//!
//! A population `P` (`N×d`, coordinates in `[0,1]`) and its fitness `F`
//! (`N×1`, minimised) are mapped to offspring by a stack of layers, each
//! performing attention-based selection, an MLP crossover with dropout and a
//! gene-level attention mutation. The operator weights can be pre-trained on
//! archives of source-optimizer runs and are self-tuned every generation by
//! pulling offspring toward the elite population.

pub mod archive;
pub mod error;
pub mod evolution;
pub mod gradengine;
pub mod model;
pub mod problems;
pub mod rng;
pub mod sourceopt;
pub mod training;

pub use error::{Error, FormatError, Result};
pub use gradengine::Tensor2;
