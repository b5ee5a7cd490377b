//! A small decoder-only transformer over the chess token vocabulary.

mod checkpoint;
mod config;
mod loss;
mod model;
mod optim;
mod params;
pub mod scalar;
mod train;

use thiserror::Error;

use crate::notation::TokenId;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{LrSchedule, ModelConfig, TrainConfig, MAX_CONTEXT};
pub use loss::{nll_loss, LossMask, LossOutput};
pub use model::{ForwardCache, Gpt};
pub use optim::{clip_grad_norm, AdamW};
pub use params::{Layout, Parameters, TensorSpec};
pub use scalar::Scalar;
pub use train::{dev_loss_mask, evaluate_loss, train, EpochMetrics, TrainOutcome, TrainState};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence of {len} tokens exceeds the context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("no target positions left after masking")]
    NoTargets,
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged (non-finite weights) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("vocabulary hash mismatch: expected {expected}, checkpoint has {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that scores next tokens. Evaluation code is written against
/// this trait so it can run on trained models and on simple stand-ins.
pub trait LanguageModel: Sync {
    fn context_len(&self) -> usize;

    fn vocab_size(&self) -> usize;

    /// Logits for every position, row-major `tokens.len() x vocab_size`.
    fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>, LmError>;

    /// Logits of the token following `tokens`.
    fn next_logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let v = self.vocab_size();
        let all = self.logits(tokens)?;
        Ok(all[all.len() - v..].to_vec())
    }
}

impl<T: Scalar> LanguageModel for Gpt<T> {
    fn context_len(&self) -> usize {
        self.config.context_len
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>, LmError> {
        Ok(self
            .forward_sequence(tokens)?
            .into_iter()
            .map(Scalar::as_f64)
            .collect())
    }
}

/// Assigns equal logits to every token.
#[derive(Debug, Clone, Copy)]
pub struct UniformModel {
    pub context_len: usize,
    pub vocab_size: usize,
}

impl Default for UniformModel {
    fn default() -> Self {
        UniformModel {
            context_len: MAX_CONTEXT,
            vocab_size: crate::notation::VOCAB_SIZE,
        }
    }
}

impl LanguageModel for UniformModel {
    fn context_len(&self) -> usize {
        self.context_len
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>, LmError> {
        if tokens.len() > self.context_len {
            return Err(LmError::SequenceTooLong {
                len: tokens.len(),
                max: self.context_len,
            });
        }
        Ok(vec![0.0; tokens.len() * self.vocab_size])
    }
}

/// Softmax over the ids not in `masked`, as `(id, probability)` sorted by
/// descending probability, ties by lower id.
pub fn rank_logits(logits: &[f64], masked: &[TokenId]) -> Vec<(TokenId, f64)> {
    let keep: Vec<(TokenId, f64)> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as TokenId, l))
        .filter(|(i, _)| !masked.contains(i))
        .collect();
    let mx = keep.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = keep.iter().map(|&(_, l)| (l - mx).exp()).sum();
    let mut out: Vec<(TokenId, f64)> = keep.into_iter().map(|(i, l)| (i, (l - mx).exp() / z)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Ranked next-token distribution after `prompt`.
pub fn predict_ranked<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    masked: &[TokenId],
) -> Result<Vec<(TokenId, f64)>, LmError> {
    if prompt.is_empty() {
        return Err(LmError::Data("empty prompt".into()));
    }
    if prompt.len() >= model.context_len() {
        return Err(LmError::SequenceTooLong {
            len: prompt.len(),
            max: model.context_len() - 1,
        });
    }
    Ok(rank_logits(&model.next_logits(prompt)?, masked))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_excludes_masked_and_breaks_ties() {
        let r = predict_ranked(&UniformModel::default(), &[74], &[0, 1, 2]).unwrap();
        assert_eq!(r.len(), 74);
        assert_eq!(r[0].0, 3);
        assert!(r.iter().all(|&(id, _)| id > 2));
        assert!((r.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_is_by_probability() {
        let mut logits = vec![0.0; 5];
        logits[3] = 2.0;
        logits[1] = 1.0;
        let r = rank_logits(&logits, &[]);
        let ids: Vec<TokenId> = r.iter().map(|x| x.0).collect();
        assert_eq!(ids, [3, 1, 0, 2, 4]);
    }
}
