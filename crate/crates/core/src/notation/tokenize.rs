use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{
    piece_token, promotion_token, square_token, token_kind, TokenId, TokenKind, BOS, EOS,
};
use super::{GameRecord, NotationError};
use crate::chess::{Move, Position};

/// How moves are spelled as tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NotationScheme {
    /// Start and end squares only.
    Uci,
    /// Each move carries its piece-type token with probability `p` percent
    /// during training. Inference streams never contain piece types.
    Rap(u8),
    /// Every move carries its piece-type token, at training and inference.
    Ap,
}

impl NotationScheme {
    /// Probability that a training move carries its piece type.
    pub fn inclusion_probability(self) -> f64 {
        match self {
            NotationScheme::Uci => 0.0,
            NotationScheme::Rap(p) => f64::from(p.min(100)) / 100.0,
            NotationScheme::Ap => 1.0,
        }
    }

    /// Whether models trained under this scheme have seen piece-type tokens.
    pub fn has_piece_types(self) -> bool {
        self.inclusion_probability() > 0.0
    }

    /// Whether inference-time histories carry piece-type tokens.
    pub fn pieces_at_inference(self) -> bool {
        matches!(self, NotationScheme::Ap)
    }
}

impl fmt::Display for NotationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NotationScheme::Uci => f.write_str("uci"),
            NotationScheme::Rap(p) => write!(f, "rap{p}"),
            NotationScheme::Ap => f.write_str("ap"),
        }
    }
}

impl FromStr for NotationScheme {
    type Err = NotationError;

    /// Accepts `uci`, `ap`, `rap25`, `rap:25` or `rap-25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "uci" => return Ok(NotationScheme::Uci),
            "ap" => return Ok(NotationScheme::Ap),
            _ => {}
        }
        if let Some(rest) = lower.strip_prefix("rap") {
            let digits = rest.trim_start_matches([':', '-', '_', '=']);
            if let Ok(p) = digits.parse::<u8>() {
                if p <= 100 {
                    return Ok(NotationScheme::Rap(p));
                }
            }
        }
        Err(NotationError::BadScheme(s.to_string()))
    }
}

fn push_move(out: &mut Vec<TokenId>, pos: &Position, mv: Move, with_piece: bool) {
    if with_piece {
        if let Some(p) = pos.piece_at(mv.from) {
            out.push(piece_token(p.kind));
        }
    }
    out.push(square_token(mv.from));
    out.push(square_token(mv.to));
    if let Some(promo) = mv.promotion.and_then(promotion_token) {
        out.push(promo);
    }
}

/// Training-time token stream: `BOS`, per-move tokens, `EOS`.
///
/// Under `Rap(p)` each move independently includes its piece-type token with
/// probability `p / 100`, drawn from `rng`. `Rap(0)` and `Rap(100)` draw no
/// randomness and coincide with `Uci` and `Ap` respectively.
pub fn tokenize_game<R: Rng + ?Sized>(
    game: &GameRecord,
    scheme: NotationScheme,
    rng: &mut R,
) -> Result<Vec<TokenId>, NotationError> {
    let prob = scheme.inclusion_probability();
    let mut out = Vec::with_capacity(2 * game.moves.len() + 2);
    out.push(BOS);
    let mut pos = Position::initial();
    for (ply, &mv) in game.moves.iter().enumerate() {
        let with_piece = if prob <= 0.0 {
            false
        } else if prob >= 1.0 {
            true
        } else {
            rng.gen_bool(prob)
        };
        push_move(&mut out, &pos, mv, with_piece);
        pos = pos.apply(mv).map_err(|e| NotationError::IllegalMove {
            ply,
            source: e,
        })?;
    }
    out.push(EOS);
    Ok(out)
}

/// Inference-time encoding of a move prefix: `BOS` followed by the moves,
/// with piece types only when `with_pieces` is set. No `EOS`.
pub fn encode_prefix(moves: &[Move], with_pieces: bool) -> Result<Vec<TokenId>, NotationError> {
    let mut out = Vec::with_capacity(2 * moves.len() + 1);
    out.push(BOS);
    let mut pos = Position::initial();
    for (ply, &mv) in moves.iter().enumerate() {
        push_move(&mut out, &pos, mv, with_pieces);
        pos = pos
            .apply(mv)
            .map_err(|e| NotationError::IllegalMove { ply, source: e })?;
    }
    Ok(out)
}

/// Rebuilds a game from a token stream produced by [`tokenize_game`].
///
/// A leading `BOS` and a trailing `EOS` (optionally followed by `PAD`) are
/// accepted. Piece-type tokens are checked against the piece that actually
/// moves.
pub fn detokenize(tokens: &[TokenId]) -> Result<GameRecord, NotationError> {
    let grammar = |at: usize, why: &str| NotationError::Grammar {
        at,
        reason: why.to_string(),
    };
    let mut i = 0;
    let mut end = tokens.len();
    while end > 0 && matches!(token_kind(tokens[end - 1]), Some(TokenKind::Pad)) {
        end -= 1;
    }
    if end > 0 && tokens[end - 1] == EOS {
        end -= 1;
    }
    if tokens.first() == Some(&BOS) {
        i = 1;
    }
    let mut pos = Position::initial();
    let mut moves = Vec::new();
    while i < end {
        let mut claimed_piece = None;
        let kind = token_kind(tokens[i]).ok_or_else(|| grammar(i, "unknown token id"))?;
        if let TokenKind::Piece(p) = kind {
            claimed_piece = Some(p);
            i += 1;
        }
        let from = match tokens.get(i).filter(|_| i < end).and_then(|&t| token_kind(t)) {
            Some(TokenKind::Square(s)) => s,
            _ => return Err(grammar(i, "expected start square")),
        };
        i += 1;
        let to = match tokens.get(i).filter(|_| i < end).and_then(|&t| token_kind(t)) {
            Some(TokenKind::Square(s)) => s,
            _ => return Err(grammar(i, "dangling start square")),
        };
        i += 1;
        let mut mv = Move::new(from, to);
        if i < end {
            if let Some(TokenKind::Promotion(p)) = token_kind(tokens[i]) {
                mv.promotion = Some(p);
                i += 1;
            }
        }
        let ply = moves.len();
        if let Some(claimed) = claimed_piece {
            let actual = pos.piece_at(from).map(|p| p.kind);
            if actual != Some(claimed) {
                return Err(NotationError::PieceMismatch {
                    ply,
                    claimed,
                    actual,
                });
            }
        }
        pos = pos
            .apply(mv)
            .map_err(|e| NotationError::IllegalMove { ply, source: e })?;
        moves.push(mv);
    }
    Ok(GameRecord::new(moves, "detokenized"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::vocab::Vocabulary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn game(s: &str) -> GameRecord {
        GameRecord::from_uci_line(s, "t").unwrap()
    }

    fn symbols(ids: &[TokenId]) -> Vec<String> {
        let v = Vocabulary::new();
        ids.iter().map(|&i| v.symbol(i).unwrap().to_string()).collect()
    }

    #[test]
    fn running_example_token_rows() {
        let g = game("e2e4 e7e5 g1f3");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let uci = tokenize_game(&g, NotationScheme::Uci, &mut rng).unwrap();
        assert_eq!(symbols(&uci), ["BOS", "e2", "e4", "e7", "e5", "g1", "f3", "EOS"]);
        let rap = tokenize_game(&g, NotationScheme::Rap(100), &mut rng).unwrap();
        assert_eq!(
            symbols(&rap),
            ["BOS", "P", "e2", "e4", "P", "e7", "e5", "N", "g1", "f3", "EOS"]
        );
        let ap = tokenize_game(&g, NotationScheme::Ap, &mut rng).unwrap();
        assert_eq!(ap, rap);
        assert_eq!(detokenize(&rap).unwrap().moves, g.moves);
    }

    #[test]
    fn promotion_token_follows_squares() {
        let g = game("h2h4 g7g5 h4g5 h7h6 g5h6 g8f6 h6h7 f6g8 h7g8q");
        let t = tokenize_game(&g, NotationScheme::Uci, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = symbols(&t);
        assert_eq!(&s[s.len() - 4..], ["h7", "g8", "q", "EOS"]);
        assert_eq!(t.len(), 2 * g.moves.len() + 2 + 1);
        assert_eq!(detokenize(&t).unwrap().moves, g.moves);
    }

    #[test]
    fn grammar_errors() {
        let v = Vocabulary::new();
        let e2 = v.id("e2").unwrap();
        let e4 = v.id("e4").unwrap();
        assert_eq!(detokenize(&[BOS, e2, e4, EOS]).unwrap().moves.len(), 1);
        assert!(matches!(
            detokenize(&[BOS, e2, EOS]),
            Err(NotationError::Grammar { .. })
        ));
        let n = v.id("N").unwrap();
        assert!(matches!(
            detokenize(&[BOS, n, e2, e4, EOS]),
            Err(NotationError::PieceMismatch { .. })
        ));
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("uci".parse::<NotationScheme>().unwrap(), NotationScheme::Uci);
        assert_eq!("rap:25".parse::<NotationScheme>().unwrap(), NotationScheme::Rap(25));
        assert_eq!("RAP15".parse::<NotationScheme>().unwrap(), NotationScheme::Rap(15));
        assert_eq!("ap".parse::<NotationScheme>().unwrap(), NotationScheme::Ap);
        assert!("rap:101".parse::<NotationScheme>().is_err());
        assert!("san".parse::<NotationScheme>().is_err());
    }
}
