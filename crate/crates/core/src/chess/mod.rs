//! Chess rules: board state, legal moves, and prediction classification.

mod classify;
mod position;
mod types;

use std::collections::BTreeSet;

use thiserror::Error;

pub use classify::{
    castling_patterns, classify_prediction, geometry_any, geometry_type, path_length,
    pseudo_legal_subcategory, squares_between, ErrorCategory, PseudoLegalSubcategory,
};
pub use position::{parse_uci_line, replay, CastlingRights, Position, START_FEN};
pub use types::{Color, Move, Piece, PieceType, Square};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChessError {
    #[error("invalid square {0:?}")]
    BadSquare(String),
    #[error("invalid UCI move {0:?}")]
    BadMove(String),
    #[error("invalid FEN: {0}")]
    BadFen(String),
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("illegal move {mv} in {fen}")]
    IllegalMove { mv: String, fen: String },
    #[error("{from}{to} is {category:?}, not pseudo-legal")]
    NotPseudoLegal {
        from: Square,
        to: Square,
        category: ErrorCategory,
    },
}

pub fn initial_position() -> Position {
    Position::initial()
}

/// Ending squares reachable by a legal move from `from`. Empty when the
/// square is empty, holds an opponent piece, or the piece cannot move.
pub fn legal_destinations(pos: &Position, from: Square) -> BTreeSet<Square> {
    pos.legal_moves_from(from).into_iter().map(|m| m.to).collect()
}

/// Squares holding a piece of the side to move of type `kind` that has at
/// least one legal move.
pub fn movable_starts(pos: &Position, kind: PieceType) -> BTreeSet<Square> {
    pos.legal_moves()
        .into_iter()
        .filter(|m| pos.piece_at(m.from).is_some_and(|p| p.kind == kind))
        .map(|m| m.from)
        .collect()
}

/// Leaf count of the legal move tree.
pub fn perft(pos: &Position, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = pos.legal_moves();
    if depth == 1 {
        return moves.len() as u64;
    }
    moves
        .iter()
        .map(|m| perft(&pos.make_unchecked(*m), depth - 1))
        .sum()
}

/// Completes a last-rank pawn move lacking a promotion suffix with a queen.
/// Other moves are returned unchanged.
pub fn complete_promotion(pos: &Position, mv: Move) -> Move {
    if mv.promotion.is_none() {
        if let Some(p) = pos.piece_at(mv.from) {
            if p.kind == PieceType::Pawn && mv.to.rank() == p.color.opposite().back_rank() {
                return Move::with_promotion(mv.from, mv.to, PieceType::Queen);
            }
        }
    }
    mv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn squares(names: &[&str]) -> BTreeSet<Square> {
        names.iter().map(|n| n.parse().unwrap()).collect()
    }

    fn example() -> Position {
        replay(&parse_uci_line("e2e4 e7e5 g1f3 b8c6 d2d4 h7h6").unwrap()).unwrap()
    }

    #[test]
    fn running_example_oracle_sets() {
        let p = example();
        let sq = |s: &str| s.parse::<Square>().unwrap();
        assert_eq!(legal_destinations(&p, sq("f1")), squares(&["e2", "d3", "c4", "b5", "a6"]));
        assert_eq!(legal_destinations(&p, sq("f3")), squares(&["d2", "g1", "h4", "g5", "e5"]));
        assert_eq!(movable_starts(&p, PieceType::Bishop), squares(&["f1", "c1"]));
        assert_eq!(movable_starts(&p, PieceType::Knight), squares(&["f3", "b1"]));
        assert!(legal_destinations(&Position::initial(), sq("a1")).is_empty());
        assert!(movable_starts(&Position::initial(), PieceType::Queen).is_empty());
    }

    #[test]
    fn running_example_classifications() {
        let p = example();
        let sq = |s: &str| s.parse::<Square>().unwrap();
        assert_eq!(classify_prediction(&p, sq("f1"), sq("b5")), ErrorCategory::Legal);
        assert_eq!(
            classify_prediction(&p, sq("f1"), sq("g2")),
            ErrorCategory::PathObstruction
        );
        assert_eq!(classify_prediction(&p, sq("f1"), sq("g1")), ErrorCategory::Syntax);
        assert_eq!(classify_prediction(&p, sq("a1"), sq("b4")), ErrorCategory::Unreachable);
        let after = p.apply("f1b5".parse().unwrap()).unwrap();
        assert!(after.piece_at(sq("f1")).is_none());
        assert_eq!(after.piece_at(sq("b5")).unwrap().kind, PieceType::Bishop);
    }

    #[test]
    fn shallow_perft() {
        let p = Position::initial();
        assert_eq!(perft(&p, 0), 1);
        assert_eq!(perft(&p, 1), 20);
        assert_eq!(perft(&p, 2), 400);
    }

    #[test]
    fn promotion_completion() {
        let p = Position::from_fen("8/4P3/8/8/8/8/8/k3K3 w - - 0 1").unwrap();
        let m = complete_promotion(&p, "e7e8".parse().unwrap());
        assert_eq!(m.uci(), "e7e8q");
        let m = complete_promotion(&p, "e1d2".parse().unwrap());
        assert_eq!(m.uci(), "e1d2");
    }
}
