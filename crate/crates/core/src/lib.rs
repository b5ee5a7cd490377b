//! Chess move-prediction probes for small transformer language models.
//!
//! The crate covers move legality, tokenized game notation, corpus
//! preparation, a trainable transformer, and the probe evaluation suite.

pub mod chess;
pub mod corpus;
pub mod eval;
pub mod lm;
pub mod notation;

/// Single-precision model, used for training and inference.
pub type Gpt32 = lm::Gpt<f32>;
/// Double-precision model, used for gradient checks.
pub type Gpt64 = lm::Gpt<f64>;
pub type Checkpoint32 = lm::Checkpoint<f32>;
pub type Checkpoint64 = lm::Checkpoint<f64>;
