use std::ops::ControlFlow;

use chessprobe::corpus::synth_games;
use chessprobe::lm::{evaluate_loss, train, Checkpoint, ModelConfig, TrainConfig, TrainOutcome, TrainState};
use chessprobe::notation::{GameRecord, NotationScheme, Vocabulary, VOCAB_SIZE};

fn tiny() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        context_len: 128,
        vocab_size: VOCAB_SIZE,
        attention_window: None,
        dropout_rate: 0.1,
    }
}

fn tcfg(epochs: usize, patience: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 20,
        max_epochs: epochs,
        patience,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn data() -> (Vec<GameRecord>, Vec<GameRecord>) {
    (synth_games(200, 40, 1), synth_games(40, 40, 2))
}

fn run(cfg: &TrainConfig, scheme: NotationScheme, resume: Option<TrainState<f32>>) -> TrainOutcome<f32> {
    let (tr, dev) = data();
    train(&tiny(), cfg, &tr, &dev, scheme, resume, |_, _, _| Ok(ControlFlow::Continue(()))).unwrap()
}

#[test]
fn three_epochs_lower_the_training_loss() {
    let out = run(&tcfg(3, 3, 3e-3), NotationScheme::Rap(25), None);
    let tl: Vec<f64> = out.history.iter().map(|m| m.train_loss).collect();
    assert_eq!(tl.len(), 3);
    assert!(tl[0] > tl[1] && tl[1] > tl[2], "{tl:?}");
    // uniform over the vocabulary is ln 77
    assert!(tl[2] < (VOCAB_SIZE as f64).ln());
    assert_eq!(out.history.last().unwrap().steps, 30);
}

#[test]
fn same_seed_gives_bit_identical_weights() {
    let a = run(&tcfg(2, 2, 1e-3), NotationScheme::Uci, None);
    let b = run(&tcfg(2, 2, 1e-3), NotationScheme::Uci, None);
    assert_eq!(a.best.params.as_slice(), b.best.params.as_slice());
    assert_eq!(a.history, b.history);
    let mut other = tcfg(2, 2, 1e-3);
    other.seed = 6;
    let c = run(&other, NotationScheme::Uci, None);
    assert_ne!(a.best.params.as_slice(), c.best.params.as_slice());
}

#[test]
fn rap_zero_trains_exactly_like_uci() {
    let a = run(&tcfg(1, 1, 1e-3), NotationScheme::Uci, None);
    let b = run(&tcfg(1, 1, 1e-3), NotationScheme::Rap(0), None);
    assert_eq!(a.best.params.as_slice(), b.best.params.as_slice());
    assert_eq!(a.history, b.history);
}

#[test]
fn early_stop_keeps_the_best_epoch_weights() {
    // four training games overfit fast, so dev loss turns up within a few epochs
    let tr = synth_games(4, 40, 1);
    let dev = synth_games(40, 40, 2);
    let mut cfg = tcfg(40, 1, 2e-2);
    cfg.batch_size = 2;
    let out = train(&tiny(), &cfg, &tr, &dev, NotationScheme::Uci, None::<TrainState<f32>>, |_, _, _| Ok(ControlFlow::Continue(()))).unwrap();
    assert!(out.stopped_early);
    let n = out.history.len();
    assert!(n < 40);
    assert_eq!(out.best_epoch, n - 1);
    assert!(out.history[n - 1].dev_loss >= out.history[n - 2].dev_loss);
    let best_dev = evaluate_loss(&out.best, &dev, NotationScheme::Uci).unwrap();
    assert_eq!(best_dev, out.history[n - 2].dev_loss);
    assert_ne!(out.best.params.as_slice(), out.state.model.params.as_slice());
}

#[test]
fn resuming_from_a_saved_checkpoint_matches_an_uninterrupted_run() {
    let cfg = tcfg(4, 4, 2e-3);
    let scheme = NotationScheme::Rap(25);
    let full = run(&cfg, scheme, None);

    let (tr, dev) = data();
    let vocab = Vocabulary::new();
    let mut saved = None;
    let partial = train(&tiny(), &cfg, &tr, &dev, scheme, None::<TrainState<f32>>, |m, st, _| {
        if m.epoch == 2 {
            let mut ck = Checkpoint::new(st.model.clone(), scheme, &vocab);
            ck.train = Some((cfg.clone(), st.clone()));
            saved = Some(ck.to_bytes()?);
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    })
    .unwrap();
    assert_eq!(partial.history.len(), 2);
    assert!(!partial.stopped_early);
    let ck = Checkpoint::<f32>::from_bytes(&saved.unwrap(), Some(&vocab)).unwrap();
    let (_, state) = ck.train.unwrap();
    assert_eq!(state.epochs_done, 2);
    let resumed = run(&cfg, scheme, Some(state));
    assert_eq!(resumed.history, full.history);
    assert_eq!(resumed.state.model.params.as_slice(), full.state.model.params.as_slice());
    assert_eq!(resumed.best.params.as_slice(), full.best.params.as_slice());
}
