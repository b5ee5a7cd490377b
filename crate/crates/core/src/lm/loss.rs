use super::{LmError, Scalar};
use crate::notation::vocab::PAD;
use crate::notation::TokenId;

/// Result of [`nll_loss`]: mean over counted positions plus per-position
/// losses (`None` where the target was ignored).
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub mean: f64,
    pub count: usize,
    pub per_token: Vec<Option<f64>>,
}

/// Which targets and logits to leave out.
#[derive(Debug, Clone, Default)]
pub struct LossMask {
    /// Ids whose logits are set to -inf before normalization. Targets equal
    /// to a masked id are ignored.
    pub masked: Vec<TokenId>,
}

impl LossMask {
    pub fn none() -> Self {
        LossMask::default()
    }

    pub fn with_masked(masked: Vec<TokenId>) -> Self {
        LossMask { masked }
    }

    fn ignores(&self, target: TokenId) -> bool {
        target == PAD || self.masked.contains(&target)
    }
}

/// Cross-entropy of each row of `logits` (`targets.len() x vocab`) against
/// its target. When `grad` is given, writes `scale * d(sum of losses)/d(logits)`.
pub(crate) fn cross_entropy<T: Scalar>(
    logits: &[T],
    targets: &[TokenId],
    vocab: usize,
    mask: &LossMask,
    mut grad: Option<(&mut [T], T)>,
) -> (f64, Vec<Option<f64>>) {
    let mut allowed = vec![true; vocab];
    for &m in &mask.masked {
        if (m as usize) < vocab {
            allowed[m as usize] = false;
        }
    }
    let mut total = 0.0;
    let mut per = Vec::with_capacity(targets.len());
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * vocab..(r + 1) * vocab];
        if mask.ignores(t) {
            per.push(None);
            if let Some((g, _)) = grad.as_mut() {
                g[r * vocab..(r + 1) * vocab].fill(T::zero());
            }
            continue;
        }
        let mx = row
            .iter()
            .zip(&allowed)
            .filter(|(_, &a)| a)
            .map(|(x, _)| x.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row
            .iter()
            .zip(&allowed)
            .filter(|(_, &a)| a)
            .map(|(x, _)| (x.as_f64() - mx).exp())
            .sum();
        let log_z = mx + z.ln();
        let loss = log_z - row[t as usize].as_f64();
        total += loss;
        per.push(Some(loss));
        if let Some((g, scale)) = grad.as_mut() {
            let gr = &mut g[r * vocab..(r + 1) * vocab];
            for j in 0..vocab {
                gr[j] = if allowed[j] {
                    let p = (row[j].as_f64() - log_z).exp();
                    let y = if j == t as usize { 1.0 } else { 0.0 };
                    T::of(p - y) * *scale
                } else {
                    T::zero()
                };
            }
        }
    }
    (total, per)
}

/// Mean next-token cross-entropy over targets that are neither PAD nor masked.
/// `logits` is row-major `targets.len() x vocab`.
pub fn nll_loss<T: Scalar>(
    logits: &[T],
    targets: &[TokenId],
    vocab: usize,
    mask: &LossMask,
) -> Result<LossOutput, LmError> {
    if logits.len() != targets.len() * vocab {
        return Err(LmError::Shape(format!(
            "{} logits for {} targets over {vocab} ids",
            logits.len(),
            targets.len()
        )));
    }
    let (total, per_token) = cross_entropy(logits, targets, vocab, mask, None);
    let count = per_token.iter().flatten().count();
    if count == 0 {
        return Err(LmError::NoTargets);
    }
    Ok(LossOutput {
        mean: total / count as f64,
        count,
        per_token,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::VOCAB_SIZE;

    #[test]
    fn uniform_logits() {
        let logits = vec![0.0f32; 3 * VOCAB_SIZE];
        let out = nll_loss(&logits, &[4, 9, 70], VOCAB_SIZE, &LossMask::none()).unwrap();
        assert!((out.mean - (77f64).ln()).abs() < 1e-6);
        let masked = LossMask::with_masked((64..74).collect());
        let out = nll_loss(&logits, &[4, 9, 70], VOCAB_SIZE, &masked).unwrap();
        assert_eq!(out.count, 2);
        assert!((out.mean - (67f64).ln()).abs() < 1e-6);
        assert_eq!(out.per_token[2], None);
    }

    #[test]
    fn all_pad_is_an_error() {
        let logits = vec![0.0f64; 2 * VOCAB_SIZE];
        assert!(matches!(
            nll_loss(&logits, &[PAD, PAD], VOCAB_SIZE, &LossMask::none()),
            Err(LmError::NoTargets)
        ));
    }
}
