use std::io::{BufRead, Write};
use std::path::PathBuf;

use chessprobe::chess::{classify_prediction, complete_promotion, Color, ErrorCategory, Move, PieceType, Position, Square};
use chessprobe::lm::{rank_logits, LanguageModel};
use chessprobe::notation::vocab::{piece_token, promotion_token, BOS};
use chessprobe::notation::{encode_prefix, NotationScheme, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Precision;
use crate::config::{ConfigFile, Global};
use crate::error::CliError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// Side you play: white or black.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    color: Option<String>,
    /// Ranked model proposals tried before a random legal move is played.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_rejections: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub checkpoint: PathBuf,
    pub color: String,
    pub max_rejections: usize,
    pub precision: Precision,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            checkpoint: PathBuf::from("model.ckpt"),
            color: "white".into(),
            max_rejections: 10,
            precision: Precision::F32,
        }
    }
}

const SQUARES: std::ops::Range<TokenId> = 0..64;

/// The model's side of a game: proposes moves from its ranked continuations.
pub struct Opponent<'a> {
    model: &'a dyn LanguageModel,
    scheme: NotationScheme,
    max_rejections: usize,
    rng: ChaCha8Rng,
    pub fallbacks: usize,
}

fn only(allowed: impl Iterator<Item = TokenId>, vocab: usize) -> Vec<TokenId> {
    let keep: Vec<TokenId> = allowed.collect();
    (0..vocab as TokenId).filter(|t| !keep.contains(t)).collect()
}

impl<'a> Opponent<'a> {
    pub fn new(model: &'a dyn LanguageModel, scheme: NotationScheme, max_rejections: usize, seed: u64) -> Self {
        Opponent {
            model,
            scheme,
            max_rejections,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fallbacks: 0,
        }
    }

    fn ranked(&self, tokens: &[TokenId], allowed: impl Iterator<Item = TokenId>) -> Result<Vec<(TokenId, f64)>, CliError> {
        let v = self.model.vocab_size();
        let logits = self.model.next_logits(&self.fit(tokens))?;
        Ok(rank_logits(&logits, &only(allowed, v)))
    }

    /// Keeps `BOS` and the most recent tokens when the game outgrows the context.
    fn fit(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        let room = self.model.context_len() - 1;
        if tokens.len() <= room {
            return tokens.to_vec();
        }
        let mut out = vec![BOS];
        out.extend_from_slice(&tokens[tokens.len() - (room - 1)..]);
        out
    }

    /// Candidate (piece, from, to) continuations in decreasing joint
    /// probability, expanding the best `width` prefixes at each step.
    fn candidates(&self, history: &[TokenId], width: usize) -> Result<Vec<(Option<PieceType>, Square, Square)>, CliError> {
        let mut beams: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
        if self.scheme.pieces_at_inference() {
            let pieces = PieceType::ALL.map(piece_token);
            beams = self
                .ranked(history, pieces.into_iter())?
                .into_iter()
                .take(width)
                .map(|(t, p)| (vec![t], p.ln()))
                .collect();
        }
        for _ in 0..2 {
            let mut next = Vec::new();
            for (toks, lp) in &beams {
                let mut ctx = history.to_vec();
                ctx.extend_from_slice(toks);
                for (t, p) in self.ranked(&ctx, SQUARES)?.into_iter().take(width) {
                    let mut ext = toks.clone();
                    ext.push(t);
                    next.push((ext, lp + p.ln()));
                }
            }
            next.sort_by(|a, b| b.1.total_cmp(&a.1));
            next.truncate(width);
            beams = next;
        }
        let sq = |t: TokenId| Square::new(t as u8).expect("square token");
        Ok(beams
            .into_iter()
            .map(|(t, _)| {
                let n = t.len();
                let piece = (n == 3).then(|| PieceType::ALL.into_iter().find(|&k| piece_token(k) == t[0]).expect("piece"));
                (piece, sq(t[n - 2]), sq(t[n - 1]))
            })
            .collect())
    }

    fn promotion(&self, history: &[TokenId], from: Square, to: Square) -> Result<PieceType, CliError> {
        let mut ctx = history.to_vec();
        ctx.push(from.index() as TokenId);
        ctx.push(to.index() as TokenId);
        let targets = [PieceType::Queen, PieceType::Rook, PieceType::Bishop, PieceType::Knight];
        let ranked = self.ranked(&ctx, targets.iter().filter_map(|&k| promotion_token(k)))?;
        let best = ranked[0].0;
        Ok(targets.into_iter().find(|&k| promotion_token(k) == Some(best)).expect("promotion token"))
    }

    /// Picks a reply; the flag is set when it came from the random fallback.
    pub fn choose(&mut self, moves: &[Move], pos: &Position) -> Result<(Move, bool), CliError> {
        let legal = pos.legal_moves();
        assert!(!legal.is_empty(), "no legal reply");
        let history = encode_prefix(moves, self.scheme.pieces_at_inference())?;
        for (piece, from, to) in self.candidates(&history, self.max_rejections)? {
            let Some(on_from) = pos.piece_at(from) else { continue };
            if piece.is_some_and(|k| k != on_from.kind) {
                continue;
            }
            let mut mv = complete_promotion(pos, Move::new(from, to));
            if mv.promotion.is_some() && !self.scheme.pieces_at_inference() {
                mv.promotion = Some(self.promotion(&history, from, to)?);
            }
            if legal.contains(&mv) {
                return Ok((mv, false));
            }
        }
        self.fallbacks += 1;
        Ok((legal[self.rng.gen_range(0..legal.len())], true))
    }
}

fn rejection_reason(pos: &Position, mv: Move) -> String {
    match pos.piece_at(mv.from) {
        None => return format!("there is no piece on {}", mv.from),
        Some(p) if p.color != pos.side_to_move() => return format!("the piece on {} is not yours", mv.from),
        _ => {}
    }
    match classify_prediction(pos, mv.from, mv.to) {
        ErrorCategory::Legal => "that promotion is not available".into(),
        ErrorCategory::Unreachable => "no piece can move between those squares".into(),
        ErrorCategory::Syntax => "that piece does not move that way".into(),
        ErrorCategory::PathObstruction => "the path is blocked".into(),
        ErrorCategory::PseudoLegal => "that would leave your king in check".into(),
    }
}

/// Runs the REPL until mate, stalemate, `quit` or end of input.
pub fn session<R: BufRead, W: Write>(
    opponent: &mut Opponent<'_>,
    human: Color,
    mut input: R,
    out: &mut W,
) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::runtime(format!("terminal: {e}"));
    let mut pos = Position::initial();
    let mut moves: Vec<Move> = Vec::new();
    writeln!(out, "You play {}. Enter moves in UCI (e2e4, e7e8q); `board` redraws, `quit` ends.", human.name()).map_err(io)?;
    write!(out, "{}", pos.diagram()).map_err(io)?;
    loop {
        if pos.legal_moves().is_empty() {
            let mover = pos.side_to_move();
            if pos.is_check(mover) {
                writeln!(out, "Checkmate, {} wins.", mover.opposite().name()).map_err(io)?;
            } else {
                writeln!(out, "Stalemate.").map_err(io)?;
            }
            break;
        }
        if pos.side_to_move() == human {
            write!(out, "your move> ").map_err(io)?;
            out.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                writeln!(out).map_err(io)?;
                break;
            }
            let cmd = line.trim();
            match cmd {
                "" => continue,
                "quit" | "exit" => break,
                "board" => {
                    write!(out, "{}", pos.diagram()).map_err(io)?;
                    continue;
                }
                _ => {}
            }
            let Some(mv) = Move::parse_uci(cmd) else {
                writeln!(out, "`{cmd}` is not a UCI move").map_err(io)?;
                continue;
            };
            let mv = complete_promotion(&pos, mv);
            if !pos.is_legal(mv) {
                writeln!(out, "illegal: {}", rejection_reason(&pos, mv)).map_err(io)?;
                continue;
            }
            pos = pos.apply(mv).expect("checked legal");
            moves.push(mv);
        } else {
            let (mv, fallback) = opponent.choose(&moves, &pos)?;
            pos = pos.apply(mv).expect("chosen from legal moves");
            moves.push(mv);
            writeln!(
                out,
                "model plays {mv}{} (random fallbacks: {})",
                if fallback { " [random]" } else { "" },
                opponent.fallbacks
            )
            .map_err(io)?;
            write!(out, "{}", pos.diagram()).map_err(io)?;
        }
    }
    writeln!(out, "moves: {}", moves.iter().map(|m| m.uci()).collect::<Vec<_>>().join(" ")).map_err(io)?;
    Ok(())
}

pub fn run(file: &ConfigFile, global: Global, args: Args) -> Result<(), CliError> {
    let s: Settings = file.command("play", Settings::default(), serde_json::to_value(&args).expect("flags"))?;
    let human = match s.color.to_ascii_lowercase().as_str() {
        "white" | "w" => Color::White,
        "black" | "b" => Color::Black,
        other => return Err(CliError::usage(format!("--color must be white or black, not `{other}`"))),
    };
    if s.max_rejections == 0 {
        return Err(CliError::usage("--max-rejections must be at least 1"));
    }
    let path = global.path(&s.checkpoint);
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    match s.precision {
        Precision::F32 => {
            let ck = super::load_checkpoint::<f32>(&path)?;
            let model = ck.best_model();
            let mut opp = Opponent::new(&model, ck.scheme, s.max_rejections, global.seed);
            session(&mut opp, human, stdin.lock(), &mut stdout)
        }
        Precision::F64 => {
            let ck = super::load_checkpoint::<f64>(&path)?;
            let model = ck.best_model();
            let mut opp = Opponent::new(&model, ck.scheme, s.max_rejections, global.seed);
            session(&mut opp, human, stdin.lock(), &mut stdout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chessprobe::lm::UniformModel;

    fn play(script: &str, human: Color, seed: u64) -> String {
        let m = UniformModel::default();
        let mut opp = Opponent::new(&m, NotationScheme::Uci, 10, seed);
        let mut out = Vec::new();
        session(&mut opp, human, script.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn accepts_legal_and_rejects_illegal_input() {
        let out = play("e2e5\ne2e4\nquit\n", Color::White, 1);
        assert!(out.contains("illegal: that piece does not move that way"), "{out}");
        assert!(out.contains("model plays"));
        assert!(out.contains("moves: e2e4 "));
    }

    #[test]
    fn scripted_sessions_repeat() {
        let a = play("e2e4\nd2d4\ng1f3\n", Color::White, 5);
        let b = play("e2e4\nd2d4\ng1f3\n", Color::White, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn model_moves_first_as_white() {
        let out = play("", Color::Black, 2);
        let first = out.lines().find(|l| l.starts_with("model plays")).unwrap();
        let mv = Move::parse_uci(first.split_whitespace().nth(2).unwrap()).unwrap();
        assert!(Position::initial().is_legal(mv));
    }
}
