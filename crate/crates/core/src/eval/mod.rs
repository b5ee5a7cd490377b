//! Perplexity, probing tasks, baselines and error analysis.

mod analysis;
mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{PieceType, Square};
use crate::corpus::{ProbeInstance, ProbeTask, Prompt};
use crate::lm::{rank_logits, LanguageModel, LmError};
use crate::notation::vocab::{non_square_tokens, piece_token, piece_type_tokens, square_token, EOS};
use crate::notation::{encode_prefix, tokenize_game, GameRecord, NotationError, NotationScheme, TokenId};

pub use analysis::{error_breakdown, CellCount, ErrorBreakdown};
pub use report::{
    errors_table, metrics_json, obstruction_table, path_length_csv, pseudo_legal_table, results_table, sweep_csv, ErrorCounts,
    ModelRow, TaskMetrics,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{task} needs a model trained with piece types, this one uses {scheme}")]
    IncompatibleModel { task: ProbeTask, scheme: NotationScheme },
    #[error("instance set mixes tasks ({0} and {1})")]
    MixedTasks(ProbeTask, ProbeTask),
    #[error("error analysis applies to End tasks, not {0}")]
    NotEndTask(ProbeTask),
    #[error("RAP sweep values must come from 0, 5, 15, 25, 50, 75, 100; got {0}")]
    BadSweepValue(u8),
    #[error("no games to score")]
    Empty,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Notation(#[from] NotationError),
}

/// Shared worker pool helper: maps `f` over `items` with `threads` workers,
/// returning results in input order.
fn par_map<I: Sync, O: Send, F>(items: &[I], threads: usize, f: F) -> Vec<O>
where
    F: Fn(&I) -> O + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<O>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityOptions {
    /// Score histories with piece-type tokens (AP models).
    pub with_pieces: bool,
    /// Logit ids removed from every distribution before normalizing.
    pub masked: Vec<TokenId>,
    pub threads: usize,
}

impl PerplexityOptions {
    /// Settings matching how a model trained under `scheme` is scored:
    /// UCI as is, RAP on UCI text with piece-type logits masked, AP on
    /// AP text.
    pub fn for_scheme(scheme: NotationScheme) -> Self {
        let (with_pieces, masked) = match scheme {
            NotationScheme::Uci | NotationScheme::Rap(0) => (false, Vec::new()),
            NotationScheme::Rap(_) => (false, piece_type_tokens()),
            NotationScheme::Ap => (true, Vec::new()),
        };
        PerplexityOptions {
            with_pieces,
            masked,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perplexity {
    pub perplexity: f64,
    pub moves: usize,
    pub nll: f64,
}

/// Per-move perplexity: each move's probability is the product of its token
/// probabilities, `BOS` only conditions, and `EOS` is not scored.
pub fn canonical_perplexity<M: LanguageModel + ?Sized>(
    model: &M,
    games: &[GameRecord],
    opts: &PerplexityOptions,
) -> Result<Perplexity, EvalError> {
    let scheme = if opts.with_pieces {
        NotationScheme::Ap
    } else {
        NotationScheme::Uci
    };
    let per_game = par_map(games, opts.threads, |g| -> Result<(f64, usize), EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = tokenize_game(g, scheme, &mut rng)?;
        let logits = model.logits(&seq[..seq.len() - 1])?;
        let v = model.vocab_size();
        let mut nll = 0.0;
        for (i, &target) in seq[1..].iter().enumerate() {
            if target == EOS {
                continue;
            }
            let ranked = &logits[i * v..(i + 1) * v];
            nll -= log_softmax_at(ranked, &opts.masked, target);
        }
        Ok((nll, g.ply_count()))
    });
    let mut nll = 0.0;
    let mut moves = 0;
    for r in per_game {
        let (a, b) = r?;
        nll += a;
        moves += b;
    }
    if moves == 0 {
        return Err(EvalError::Empty);
    }
    Ok(Perplexity {
        perplexity: (nll / moves as f64).exp(),
        moves,
        nll,
    })
}

fn log_softmax_at(logits: &[f64], masked: &[TokenId], target: TokenId) -> f64 {
    if masked.contains(&target) {
        return f64::NEG_INFINITY;
    }
    let keep = |i: usize| !masked.contains(&(i as TokenId));
    let mx = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, &l)| (l - mx).exp())
        .sum();
    logits[target as usize] - mx - z.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    /// Notation the model was trained with.
    pub scheme: NotationScheme,
    /// Restrict predictions to the 64 square tokens.
    pub squares_only: bool,
    pub threads: usize,
}

impl ProbeOptions {
    pub fn new(scheme: NotationScheme) -> Self {
        ProbeOptions {
            scheme,
            squares_only: true,
            threads: 1,
        }
    }
}

/// Token prompt for an instance: history, then the prompt tokens.
pub fn probe_prompt(inst: &ProbeInstance, scheme: NotationScheme) -> Result<Vec<TokenId>, EvalError> {
    let pieces = scheme.pieces_at_inference();
    let mut toks = encode_prefix(&inst.prefix, pieces)?;
    match inst.prompt {
        Prompt::Square(s) => {
            if pieces {
                if let Some(p) = inst.position().piece_at(s) {
                    toks.push(piece_token(p.kind));
                }
            }
            toks.push(square_token(s));
        }
        Prompt::Piece(p) => toks.push(piece_token(p)),
    }
    Ok(toks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub prompt: String,
    pub top1: TokenId,
    /// Top-1 as a square, if it is a square token.
    pub predicted: Option<Square>,
    pub top_r: Vec<TokenId>,
    /// 1-based rank of the exact answer among the ranked candidates.
    pub exact_rank: Option<usize>,
    pub exm: Option<bool>,
    pub lgm: bool,
    pub r_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: ProbeTask,
    pub n: usize,
    pub exm_acc: Option<f64>,
    pub lgm_acc: f64,
    pub r_precision: f64,
    pub instances: Vec<InstanceResult>,
}

impl TaskResult {
    /// Aggregates per-instance scores, e.g. ones reloaded from a predictions file.
    pub fn from_instances(task: ProbeTask, instances: Vec<InstanceResult>) -> TaskResult {
        let n = instances.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let exm_acc = task
            .is_actual()
            .then(|| frac(instances.iter().filter(|r| r.exm == Some(true)).count()));
        TaskResult {
            task,
            n,
            exm_acc,
            lgm_acc: frac(instances.iter().filter(|r| r.lgm).count()),
            r_precision: if n == 0 {
                0.0
            } else {
                instances.iter().map(|r| r.r_precision).sum::<f64>() / n as f64
            },
            instances,
        }
    }
}

fn score_instance(
    inst: &ProbeInstance,
    ranked: &[(TokenId, f64)],
) -> InstanceResult {
    let top1 = ranked[0].0;
    let as_square = |t: TokenId| (t < 64).then(|| Square::new(t as u8).expect("square id"));
    let predicted = as_square(top1);
    let r = inst.legal_answers.len();
    let top_r: Vec<TokenId> = ranked.iter().take(r).map(|x| x.0).collect();
    let hits = top_r
        .iter()
        .filter(|&&t| as_square(t).is_some_and(|s| inst.legal_answers.contains(&s)))
        .count();
    let exact_rank = inst
        .exact_answer
        .and_then(|a| ranked.iter().position(|x| x.0 == square_token(a)).map(|p| p + 1));
    InstanceResult {
        prompt: inst.prompt.to_string(),
        top1,
        predicted,
        top_r,
        exact_rank,
        exm: inst.exact_answer.map(|a| predicted == Some(a)),
        lgm: predicted.is_some_and(|s| inst.legal_answers.contains(&s)),
        r_precision: hits as f64 / r as f64,
    }
}

/// Runs one task's instances through the model and scores the top
/// predictions.
pub fn run_probe<M: LanguageModel + ?Sized>(
    model: &M,
    instances: &[ProbeInstance],
    opts: &ProbeOptions,
) -> Result<TaskResult, EvalError> {
    let task = match instances.first() {
        Some(i) => i.task,
        None => return Err(EvalError::Empty),
    };
    if let Some(other) = instances.iter().find(|i| i.task != task) {
        return Err(EvalError::MixedTasks(task, other.task));
    }
    if !task.is_end() && !opts.scheme.has_piece_types() {
        return Err(EvalError::IncompatibleModel {
            task,
            scheme: opts.scheme,
        });
    }
    let masked: Vec<TokenId> = if opts.squares_only {
        non_square_tokens()
    } else {
        Vec::new()
    };
    let results = par_map(instances, opts.threads, |inst| -> Result<InstanceResult, EvalError> {
        let prompt = probe_prompt(inst, opts.scheme)?;
        let logits = model.next_logits(&prompt)?;
        Ok(score_instance(inst, &rank_logits(&logits, &masked)))
    });
    let instances: Vec<InstanceResult> = results.into_iter().collect::<Result<_, _>>()?;
    Ok(TaskResult::from_instances(task, instances))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Closed form: mean over instances of 1/R.
    pub exact: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub trials: usize,
}

/// ExM accuracy of guessing uniformly among the legal answers.
pub fn random_legal_baseline(instances: &[ProbeInstance], seed: u64, trials: usize) -> Option<Baseline> {
    let scored: Vec<&ProbeInstance> = instances.iter().filter(|i| i.exact_answer.is_some()).collect();
    if scored.is_empty() || trials == 0 {
        return None;
    }
    let n = scored.len() as f64;
    let exact = scored.iter().map(|i| 1.0 / i.legal_answers.len() as f64).sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..trials)
        .map(|_| {
            let hits = scored
                .iter()
                .filter(|i| {
                    let pick = i.legal_answers[rng.gen_range(0..i.legal_answers.len())];
                    Some(pick) == i.exact_answer
                })
                .count();
            hits as f64 / n
        })
        .collect();
    let mc = means.iter().sum::<f64>() / trials as f64;
    let se = if trials > 1 {
        let var = means.iter().map(|m| (m - mc).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        f64::NAN
    };
    Some(Baseline {
        exact,
        monte_carlo: mc,
        standard_error: se,
        trials,
    })
}

/// Mean `R / 64`: LgM accuracy of guessing a square uniformly at random.
pub fn random_square_lgm(instances: &[ProbeInstance]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    instances.iter().map(|i| i.legal_answers.len() as f64 / 64.0).sum::<f64>() / instances.len() as f64
}

pub const SWEEP_VALUES: [u8; 7] = [0, 5, 15, 25, 50, 75, 100];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: u8,
    pub dev_ppl: f64,
}

/// Trains and scores one model per RAP probability via `train_fn`, which
/// receives the scheme and returns dev perplexity.
pub fn rap_sweep<F>(ps: &[u8], mut train_fn: F) -> Result<Vec<SweepRow>, EvalError>
where
    F: FnMut(NotationScheme) -> Result<f64, EvalError>,
{
    if let Some(&bad) = ps.iter().find(|p| !SWEEP_VALUES.contains(p)) {
        return Err(EvalError::BadSweepValue(bad));
    }
    ps.iter()
        .map(|&p| Ok(SweepRow {
            p,
            dev_ppl: train_fn(NotationScheme::Rap(p))?,
        }))
        .collect()
}

/// Piece type a probe prompt refers to.
pub fn prompt_piece(inst: &ProbeInstance) -> Option<PieceType> {
    match inst.prompt {
        Prompt::Piece(p) => Some(p),
        Prompt::Square(s) => inst.position().piece_at(s).map(|p| p.kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::UniformModel;

    #[test]
    fn uniform_model_perplexity() {
        let g = GameRecord::from_uci_line("e2e4", "g").unwrap();
        let m = UniformModel::default();
        let p = canonical_perplexity(&m, std::slice::from_ref(&g), &PerplexityOptions::for_scheme(NotationScheme::Uci)).unwrap();
        assert!((p.perplexity - 5929.0).abs() < 1e-6);
        let ten = PerplexityOptions {
            with_pieces: false,
            masked: (64..74).collect(),
            threads: 1,
        };
        let p = canonical_perplexity(&m, std::slice::from_ref(&g), &ten).unwrap();
        assert!((p.perplexity - 67.0f64 * 67.0).abs() < 1e-6);
        let p = canonical_perplexity(&m, &[g], &PerplexityOptions::for_scheme(NotationScheme::Rap(25))).unwrap();
        assert!((p.perplexity - 71.0f64 * 71.0).abs() < 1e-6);
    }

    #[test]
    fn baseline_exact_value() {
        let inst = ProbeInstance {
            task: ProbeTask::EndActual,
            prefix: crate::chess::parse_uci_line("e2e4 e7e5 g1f3 b8c6 d2d4 h7h6").unwrap(),
            prompt: Prompt::Square("f1".parse().unwrap()),
            exact_answer: Some("b5".parse().unwrap()),
            legal_answers: ["a6", "b5", "c4", "d3", "e2"].iter().map(|s| s.parse().unwrap()).collect(),
            source_id: "t".into(),
        };
        let b = random_legal_baseline(&[inst], 1, 2000).unwrap();
        assert_eq!(b.exact, 0.2);
        assert!((b.monte_carlo - 0.2).abs() < 3.0 * b.standard_error + 1e-12);
    }

    #[test]
    fn sweep_rejects_unlisted_values() {
        assert!(matches!(rap_sweep(&[10], |_| Ok(1.0)), Err(EvalError::BadSweepValue(10))));
        let rows = rap_sweep(&[0, 25], |s| Ok(s.inclusion_probability())).unwrap();
        assert_eq!(rows[1], SweepRow { p: 25, dev_ppl: 0.25 });
    }
}
