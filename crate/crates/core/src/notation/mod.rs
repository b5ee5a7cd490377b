//! Game records, PGN/SAN input, and the token vocabulary.

mod pgn;
mod san;
mod tokenize;
pub mod vocab;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{parse_uci_line, replay, ChessError, Move, PieceType};

pub use pgn::{parse_pgn, PgnError, PgnItem, PgnParse, PgnReader};
pub use san::{san_ambiguity_report, san_to_move, AmbiguityEntry};
pub use tokenize::{detokenize, encode_prefix, tokenize_game, NotationScheme};
pub use vocab::{TokenId, Vocabulary, VOCAB_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NotationError {
    #[error("SAN {0:?} matches no legal move")]
    SanNoMatch(String),
    #[error("SAN {san:?} is ambiguous between {candidates:?}")]
    SanAmbiguous { san: String, candidates: Vec<String> },
    #[error("cannot parse SAN {0:?}")]
    SanSyntax(String),
    #[error("illegal move at ply {ply}: {source}")]
    IllegalMove {
        ply: usize,
        #[source]
        source: ChessError,
    },
    #[error("token grammar violation at {at}: {reason}")]
    Grammar { at: usize, reason: String },
    #[error("ply {ply}: piece token {claimed:?} but the mover is {actual:?}")]
    PieceMismatch {
        ply: usize,
        claimed: PieceType,
        actual: Option<PieceType>,
    },
    #[error("unknown notation scheme {0:?} (expected uci, ap or rap:<0-100>)")]
    BadScheme(String),
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
}

/// An ordered list of moves plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameRecord {
    pub moves: Vec<Move>,
    pub source_id: String,
}

impl GameRecord {
    pub fn new(moves: Vec<Move>, source_id: impl Into<String>) -> Self {
        GameRecord {
            moves,
            source_id: source_id.into(),
        }
    }

    /// Parses and validates a space-separated UCI move line.
    pub fn from_uci_line(line: &str, source_id: impl Into<String>) -> Result<Self, NotationError> {
        let moves = parse_uci_line(line).map_err(|e| NotationError::Dataset {
            line: 0,
            reason: e.to_string(),
        })?;
        let game = GameRecord::new(moves, source_id);
        game.validate()?;
        Ok(game)
    }

    pub fn ply_count(&self) -> usize {
        self.moves.len()
    }

    /// Number of full moves, counting a trailing white move as one.
    pub fn full_move_count(&self) -> usize {
        self.moves.len().div_ceil(2)
    }

    pub fn promotion_count(&self) -> usize {
        self.moves.iter().filter(|m| m.promotion.is_some()).count()
    }

    pub fn uci_line(&self) -> String {
        self.moves
            .iter()
            .map(Move::uci)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Checks that every move is legal when replayed from the start.
    pub fn validate(&self) -> Result<(), NotationError> {
        let mut pos = crate::chess::Position::initial();
        for (ply, &mv) in self.moves.iter().enumerate() {
            pos = pos
                .apply(mv)
                .map_err(|e| NotationError::IllegalMove { ply, source: e })?;
        }
        Ok(())
    }

    pub fn final_position(&self) -> Result<crate::chess::Position, ChessError> {
        replay(&self.moves)
    }
}

/// Reads a dataset file: one game per line, space-separated UCI moves.
/// Blank lines are skipped. Every game is replayed for legality.
pub fn read_dataset<R: BufRead>(input: R, source: &str) -> Result<Vec<GameRecord>, NotationError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| NotationError::Dataset {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let game = GameRecord::from_uci_line(line, format!("{source}:{}", i + 1)).map_err(|e| {
            NotationError::Dataset {
                line: i + 1,
                reason: e.to_string(),
            }
        })?;
        out.push(game);
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(mut out: W, games: &[GameRecord]) -> std::io::Result<()> {
    for g in games {
        writeln!(out, "{}", g.uci_line())?;
    }
    out.flush()
}

/// Child seed for item `index` under `seed`, independent of scheduling.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 over the combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
