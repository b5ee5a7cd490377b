use std::ops::ControlFlow;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, LossMask};
use super::optim::{clip_grad_norm, AdamW};
use super::{Gpt, LmError, LrSchedule, ModelConfig, Parameters, Scalar, TrainConfig};
use crate::notation::vocab::piece_type_tokens;
use crate::notation::{derive_seed, tokenize_game, GameRecord, NotationScheme, TokenId};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4F50;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub lr: f64,
    pub steps: usize,
}

/// Everything needed to continue training after an interruption.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub model: Gpt<T>,
    pub optimizer: AdamW<T>,
    pub step: usize,
    pub epochs_done: usize,
    pub best_dev: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
    pub history: Vec<EpochMetrics>,
    /// Weights of the best epoch when it is not the latest one.
    pub best_params: Option<Parameters<T>>,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh(model: Gpt<T>, tcfg: &TrainConfig) -> Self {
        let optimizer = AdamW::new(&model.params, tcfg.beta1, tcfg.beta2, tcfg.eps, tcfg.weight_decay);
        TrainState {
            model,
            optimizer,
            step: 0,
            epochs_done: 0,
            best_dev: None,
            best_epoch: 0,
            epochs_since_best: 0,
            history: Vec::new(),
            best_params: None,
        }
    }

    /// The best model seen so far.
    pub fn best_model(&self) -> Gpt<T> {
        match &self.best_params {
            Some(p) => Gpt {
                config: self.model.config.clone(),
                params: p.clone(),
            },
            None => self.model.clone(),
        }
    }

    fn stopped(&self, tcfg: &TrainConfig) -> bool {
        self.epochs_done >= tcfg.max_epochs || self.epochs_since_best >= tcfg.patience
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best: Gpt<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub stopped_early: bool,
    pub state: TrainState<T>,
}

/// Token sequence used to score a dev game: piece-free for UCI and RAP
/// models, fully annotated for AP models.
fn dev_tokens(game: &GameRecord, scheme: NotationScheme) -> Result<Vec<TokenId>, LmError> {
    let eval_scheme = if scheme.pieces_at_inference() {
        NotationScheme::Ap
    } else {
        NotationScheme::Uci
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    tokenize_game(game, eval_scheme, &mut rng).map_err(|e| LmError::Data(format!("{}: {e}", game.source_id)))
}

/// Logit mask used for dev loss: RAP models score UCI text with piece-type
/// ids removed from the distribution.
pub fn dev_loss_mask(scheme: NotationScheme) -> LossMask {
    match scheme {
        NotationScheme::Rap(p) if p > 0 => LossMask::with_masked(piece_type_tokens()),
        _ => LossMask::none(),
    }
}

fn check_len(seq: &[TokenId], ctx: usize, id: &str) -> Result<(), LmError> {
    if seq.len() < 2 {
        return Err(LmError::Data(format!("{id}: game too short to train on")));
    }
    if seq.len() - 1 > ctx {
        return Err(LmError::Data(format!(
            "{id}: {} tokens exceed the context of {ctx}",
            seq.len() - 1
        )));
    }
    Ok(())
}

/// Mean token loss of `model` on `games`, without dropout.
pub fn evaluate_loss<T: Scalar>(
    model: &Gpt<T>,
    games: &[GameRecord],
    scheme: NotationScheme,
) -> Result<f64, LmError> {
    let mask = dev_loss_mask(scheme);
    let v = model.config.vocab_size;
    let mut total = 0.0;
    let mut count = 0usize;
    for g in games {
        let seq = dev_tokens(g, scheme)?;
        check_len(&seq, model.config.context_len, &g.source_id)?;
        let logits = model.forward_sequence(&seq[..seq.len() - 1])?;
        let (sum, per) = cross_entropy(&logits, &seq[1..], v, &mask, None);
        total += sum;
        count += per.iter().flatten().count();
    }
    if count == 0 {
        return Err(LmError::NoTargets);
    }
    Ok(total / count as f64)
}

/// Gradient of the summed token loss over `seqs`, scaled by `scale`.
/// Returns the summed (unscaled) loss.
fn shard_gradient<T: Scalar>(
    model: &Gpt<T>,
    seqs: &[&[TokenId]],
    scale: T,
    dropout_seed: u64,
    first_index: usize,
    grads: &mut Parameters<T>,
) -> Result<f64, LmError> {
    let v = model.config.vocab_size;
    let mask = LossMask::none();
    let mut total = 0.0;
    for (k, seq) in seqs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(dropout_seed, (first_index + k) as u64));
        let input = &seq[..seq.len() - 1];
        let (logits, cache) = model.forward_cached(input, Some(&mut rng))?;
        let mut dlogits = vec![T::zero(); logits.len()];
        let (sum, _) = cross_entropy(&logits, &seq[1..], v, &mask, Some((&mut dlogits, scale)));
        total += sum;
        model.backward(&cache, &dlogits, grads);
    }
    Ok(total)
}

/// Averaged gradient for one batch. With several threads the batch is cut
/// into contiguous shards whose gradients are summed in shard order.
fn batch_gradient<T: Scalar>(
    model: &Gpt<T>,
    seqs: &[&[TokenId]],
    threads: usize,
    dropout_seed: u64,
) -> Result<(Parameters<T>, f64, usize), LmError> {
    let count: usize = seqs.iter().map(|s| s.len() - 1).sum();
    let scale = T::one() / T::of(count as f64);
    let mut grads = model.params.zeros_like();
    let threads = threads.min(seqs.len()).max(1);
    if threads == 1 {
        let loss = shard_gradient(model, seqs, scale, dropout_seed, 0, &mut grads)?;
        return Ok((grads, loss, count));
    }
    let chunk = seqs.len().div_ceil(threads);
    let results: Vec<Result<(Parameters<T>, f64), LmError>> = std::thread::scope(|s| {
        let handles: Vec<_> = seqs
            .chunks(chunk)
            .enumerate()
            .map(|(i, part)| {
                s.spawn(move || {
                    let mut g = model.params.zeros_like();
                    let loss = shard_gradient(model, part, scale, dropout_seed, i * chunk, &mut g)?;
                    Ok((g, loss))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut loss = 0.0;
    for r in results {
        let (g, l) = r?;
        for (a, b) in grads.data.iter_mut().zip(&g.data) {
            *a += *b;
        }
        loss += l;
    }
    Ok((grads, loss, count))
}

/// Trains a model with Adam, linear warmup then linear decay, and early
/// stopping on dev loss. `on_epoch` is called after every epoch with the
/// metrics, the full state and whether this epoch is the new best; it may
/// return `ControlFlow::Break` to end the run after that epoch.
#[allow(clippy::too_many_arguments)]
pub fn train<T, F>(
    model_cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train_games: &[GameRecord],
    dev_games: &[GameRecord],
    scheme: NotationScheme,
    resume: Option<TrainState<T>>,
    mut on_epoch: F,
) -> Result<TrainOutcome<T>, LmError>
where
    T: Scalar,
    F: FnMut(&EpochMetrics, &TrainState<T>, bool) -> Result<ControlFlow<()>, LmError>,
{
    model_cfg.validate()?;
    tcfg.validate()?;
    if train_games.is_empty() {
        return Err(LmError::Data("no training games".into()));
    }
    if dev_games.is_empty() {
        return Err(LmError::Data("no dev games".into()));
    }
    let mut state = match resume {
        Some(s) => {
            if &s.model.config != model_cfg {
                return Err(LmError::Config("resumed model config differs from the requested one".into()));
            }
            s
        }
        None => TrainState::fresh(Gpt::new(model_cfg.clone(), tcfg.seed)?, tcfg),
    };
    // dev data is fixed across epochs; check it once
    for g in dev_games {
        check_len(&dev_tokens(g, scheme)?, model_cfg.context_len, &g.source_id)?;
    }

    let steps_per_epoch = train_games.len().div_ceil(tcfg.batch_size);
    let schedule = LrSchedule::new(tcfg.learning_rate, tcfg.warmup_fraction, steps_per_epoch * tcfg.max_epochs);

    while !state.stopped(tcfg) {
        let epoch = state.epochs_done;
        if state.epochs_since_best == 0 {
            // current weights are the best so far; keep them in case this epoch is worse
            state.best_params = Some(state.model.params.clone());
        }
        let epoch_seed = derive_seed(tcfg.seed, epoch as u64);
        let mut seqs = Vec::with_capacity(train_games.len());
        for (i, g) in train_games.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, i as u64));
            let s = tokenize_game(g, scheme, &mut rng).map_err(|e| LmError::Data(format!("{}: {e}", g.source_id)))?;
            check_len(&s, model_cfg.context_len, &g.source_id)?;
            seqs.push(s);
        }
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, SHUFFLE_STREAM)));

        let mut loss_sum = 0.0;
        let mut token_count = 0usize;
        let mut lr = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let refs: Vec<&[TokenId]> = batch.iter().map(|&i| seqs[i].as_slice()).collect();
            let dropout_seed = derive_seed(derive_seed(tcfg.seed, DROPOUT_STREAM), state.step as u64);
            let (mut grads, loss, count) = batch_gradient(&state.model, &refs, tcfg.threads, dropout_seed)?;
            if let Some(c) = tcfg.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            lr = schedule.lr(state.step);
            state.optimizer.step(&mut state.model.params, &grads, lr);
            state.step += 1;
            loss_sum += loss;
            token_count += count;
        }
        if !state.model.params.all_finite() {
            return Err(LmError::Diverged { epoch: epoch + 1 });
        }

        let dev_loss = evaluate_loss(&state.model, dev_games, scheme)?;
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / token_count as f64,
            dev_loss,
            lr,
            steps: state.step,
        };
        info!(
            "epoch {} train {:.4} dev {:.4} lr {:.2e}",
            metrics.epoch, metrics.train_loss, metrics.dev_loss, metrics.lr
        );
        state.epochs_done += 1;
        let improved = state.best_dev.is_none_or(|b| dev_loss < b);
        if improved {
            state.best_dev = Some(dev_loss);
            state.best_epoch = metrics.epoch;
            state.epochs_since_best = 0;
            state.best_params = None;
        } else {
            state.epochs_since_best += 1;
        }
        state.history.push(metrics.clone());
        if on_epoch(&metrics, &state, improved)?.is_break() {
            break;
        }
    }

    let stopped_early = state.epochs_since_best >= tcfg.patience;
    let best = state.best_model();
    Ok(TrainOutcome {
        best,
        best_epoch: state.best_epoch,
        history: state.history.clone(),
        stopped_early,
        state,
    })
}
