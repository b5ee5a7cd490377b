//! Geometry predicates and the taxonomy of illegal ending-square predictions.
//!
//! A prediction `(from, to)` for the piece standing on `from` falls into
//! exactly one [`ErrorCategory`]. The categories are checked in a fixed order
//! so the first matching test decides:
//!
//! 1. the pair extends to a legal move → `Legal`
//! 2. no piece type could ever connect the squares → `Unreachable`
//! 3. the actual piece type cannot connect them on an empty board → `Syntax`
//! 4. something on the board blocks the move → `PathObstruction`
//! 5. the move is otherwise fine but leaves the mover's king attacked → `PseudoLegal`

use serde::{Deserialize, Serialize};

use super::position::Position;
use super::types::{Color, PieceType, Square};
use super::ChessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    Legal,
    Unreachable,
    Syntax,
    PathObstruction,
    PseudoLegal,
}

impl ErrorCategory {
    pub const ILLEGAL: [ErrorCategory; 4] = [
        ErrorCategory::Unreachable,
        ErrorCategory::Syntax,
        ErrorCategory::PathObstruction,
        ErrorCategory::PseudoLegal,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PseudoLegalSubcategory {
    CheckKing,
    CheckOther,
    NoCheckKing,
    NoCheckOther,
}

impl PseudoLegalSubcategory {
    pub const ALL: [PseudoLegalSubcategory; 4] = [
        PseudoLegalSubcategory::CheckKing,
        PseudoLegalSubcategory::CheckOther,
        PseudoLegalSubcategory::NoCheckKing,
        PseudoLegalSubcategory::NoCheckOther,
    ];

    pub fn from_flags(in_check: bool, king_moved: bool) -> Self {
        match (in_check, king_moved) {
            (true, true) => PseudoLegalSubcategory::CheckKing,
            (true, false) => PseudoLegalSubcategory::CheckOther,
            (false, true) => PseudoLegalSubcategory::NoCheckKing,
            (false, false) => PseudoLegalSubcategory::NoCheckOther,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PseudoLegalSubcategory::CheckKing => "Check + King",
            PseudoLegalSubcategory::CheckOther => "Check + Other",
            PseudoLegalSubcategory::NoCheckKing => "No Check + King",
            PseudoLegalSubcategory::NoCheckOther => "No Check + Other",
        }
    }
}

fn deltas(from: Square, to: Square) -> (i8, i8) {
    (
        to.file() as i8 - from.file() as i8,
        to.rank() as i8 - from.rank() as i8,
    )
}

fn is_knight_jump(df: i8, dr: i8) -> bool {
    matches!((df.abs(), dr.abs()), (1, 2) | (2, 1))
}

fn is_line(df: i8, dr: i8) -> bool {
    df == 0 || dr == 0
}

fn is_diagonal(df: i8, dr: i8) -> bool {
    df.abs() == dr.abs()
}

/// True when some piece type could move between the two squares: they share
/// a rank, file or diagonal, or are a knight's jump apart.
pub fn geometry_any(from: Square, to: Square) -> bool {
    if from == to {
        return false;
    }
    let (df, dr) = deltas(from, to);
    is_line(df, dr) || is_diagonal(df, dr) || is_knight_jump(df, dr)
}

/// The two castling king moves of `color`, as (from, to).
pub fn castling_patterns(color: Color) -> [(Square, Square); 2] {
    let r = color.back_rank();
    let sq = |f| Square::from_coords(f, r).unwrap();
    [(sq(4), sq(6)), (sq(4), sq(2))]
}

fn is_castling_pattern(color: Color, from: Square, to: Square) -> bool {
    castling_patterns(color).contains(&(from, to))
}

/// Empty-board reachability in one move for a piece of `kind` and `color`.
pub fn geometry_type(kind: PieceType, color: Color, from: Square, to: Square) -> bool {
    if from == to {
        return false;
    }
    let (df, dr) = deltas(from, to);
    match kind {
        PieceType::Pawn => {
            let fwd = color.forward();
            (df == 0 && dr == fwd)
                || (df == 0 && dr == 2 * fwd && from.rank() == color.pawn_rank())
                || (df.abs() == 1 && dr == fwd)
        }
        PieceType::Knight => is_knight_jump(df, dr),
        PieceType::Bishop => is_diagonal(df, dr),
        PieceType::Rook => is_line(df, dr),
        PieceType::Queen => is_line(df, dr) || is_diagonal(df, dr),
        PieceType::King => {
            (df.abs() <= 1 && dr.abs() <= 1) || is_castling_pattern(color, from, to)
        }
    }
}

/// Squares strictly between `from` and `to` along a shared line or diagonal.
pub fn squares_between(from: Square, to: Square) -> Vec<Square> {
    let (df, dr) = deltas(from, to);
    if !(is_line(df, dr) || is_diagonal(df, dr)) || from == to {
        return Vec::new();
    }
    let (sf, sr) = (df.signum(), dr.signum());
    let mut out = Vec::new();
    let mut cur = from.offset(sf, sr).unwrap();
    while cur != to {
        out.push(cur);
        cur = cur.offset(sf, sr).unwrap();
    }
    out
}

/// King-move (Chebyshev) distance between two squares.
pub fn path_length(from: Square, to: Square) -> u8 {
    let (df, dr) = deltas(from, to);
    df.unsigned_abs().max(dr.unsigned_abs())
}

fn is_obstructed(pos: &Position, from: Square, to: Square, kind: PieceType, color: Color) -> bool {
    let occupied = |s: Square| pos.piece_at(s).is_some();
    let own = |s: Square| pos.piece_at(s).is_some_and(|p| p.color == color);
    match kind {
        PieceType::Pawn => {
            if from.file() == to.file() {
                occupied(to) || squares_between(from, to).into_iter().any(occupied)
            } else {
                match pos.piece_at(to) {
                    Some(p) => p.color == color,
                    None => pos.en_passant() != Some(to),
                }
            }
        }
        PieceType::King if is_castling_pattern(color, from, to) => {
            let rook_file = if to.file() == 6 { 7 } else { 0 };
            let rook = Square::from_coords(rook_file, from.rank()).unwrap();
            squares_between(from, rook).into_iter().any(occupied)
        }
        PieceType::Knight | PieceType::King => own(to),
        PieceType::Bishop | PieceType::Rook | PieceType::Queen => {
            own(to) || squares_between(from, to).into_iter().any(occupied)
        }
    }
}

fn extends_to_legal(pos: &Position, from: Square, to: Square) -> bool {
    pos.legal_moves_from(from).iter().any(|m| m.to == to)
}

/// Places a predicted `(from, to)` pair into the illegal-move taxonomy.
///
/// Promotion is ignored: the pair counts as legal if any promotion choice
/// makes it legal. When `from` does not hold a piece of the side to move the
/// prediction is `Unreachable` or `Syntax` on geometry alone.
pub fn classify_prediction(pos: &Position, from: Square, to: Square) -> ErrorCategory {
    if extends_to_legal(pos, from, to) {
        return ErrorCategory::Legal;
    }
    if !geometry_any(from, to) {
        return ErrorCategory::Unreachable;
    }
    let Some(piece) = pos.piece_at(from).filter(|p| p.color == pos.side_to_move()) else {
        return ErrorCategory::Syntax;
    };
    if !geometry_type(piece.kind, piece.color, from, to) {
        return ErrorCategory::Syntax;
    }
    if piece.kind == PieceType::King && is_castling_pattern(piece.color, from, to) {
        let rights = pos.castling_rights();
        let has_right = if to.file() == 6 {
            rights.kingside(piece.color)
        } else {
            rights.queenside(piece.color)
        };
        if !has_right {
            return ErrorCategory::Syntax;
        }
    }
    if is_obstructed(pos, from, to, piece.kind, piece.color) {
        return ErrorCategory::PathObstruction;
    }
    ErrorCategory::PseudoLegal
}

/// Splits a pseudo-legal prediction by whether the mover was already in check
/// and whether the king itself was moved.
pub fn pseudo_legal_subcategory(
    pos: &Position,
    from: Square,
    to: Square,
) -> Result<PseudoLegalSubcategory, ChessError> {
    let cat = classify_prediction(pos, from, to);
    if cat != ErrorCategory::PseudoLegal {
        return Err(ChessError::NotPseudoLegal {
            from,
            to,
            category: cat,
        });
    }
    let us = pos.side_to_move();
    let king_moved = pos.piece_at(from).is_some_and(|p| p.kind == PieceType::King);
    Ok(PseudoLegalSubcategory::from_flags(pos.is_check(us), king_moved))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    #[test]
    fn geometry_any_examples() {
        assert!(geometry_any(sq("a1"), sq("b3")));
        assert!(geometry_any(sq("a1"), sq("h8")));
        assert!(!geometry_any(sq("a1"), sq("b4")));
    }

    #[test]
    fn geometry_type_examples() {
        assert!(!geometry_type(PieceType::Bishop, Color::White, sq("f1"), sq("g1")));
        assert!(geometry_type(PieceType::Pawn, Color::White, sq("e2"), sq("e4")));
        assert!(!geometry_type(PieceType::Pawn, Color::White, sq("e4"), sq("e2")));
        assert!(!geometry_type(PieceType::Pawn, Color::White, sq("e3"), sq("e5")));
        assert!(geometry_type(PieceType::Pawn, Color::Black, sq("d7"), sq("d5")));
        assert!(geometry_type(PieceType::King, Color::White, sq("e1"), sq("c1")));
        assert!(!geometry_type(PieceType::King, Color::Black, sq("e1"), sq("c1")));
    }

    #[test]
    fn queen_covers_everything_but_knight_jumps() {
        for from in Square::all() {
            for to in Square::all().filter(|&t| t != from) {
                let others = [PieceType::Bishop, PieceType::Rook, PieceType::King]
                    .into_iter()
                    .any(|k| geometry_type(k, Color::White, from, to) && !is_castling_pattern(Color::White, from, to))
                    || geometry_type(PieceType::Pawn, Color::White, from, to)
                    || geometry_type(PieceType::Pawn, Color::Black, from, to);
                let queen = geometry_type(PieceType::Queen, Color::White, from, to);
                if others {
                    assert!(queen, "{from}{to}");
                }
                if geometry_type(PieceType::Knight, Color::White, from, to) {
                    assert!(!queen);
                }
            }
        }
    }

    #[test]
    fn path_lengths() {
        assert_eq!(path_length(sq("e4"), sq("b7")), 3);
        assert_eq!(path_length(sq("g1"), sq("f3")), 2);
        assert_eq!(path_length(sq("a1"), sq("a1")), 0);
    }

    #[test]
    fn castling_cases() {
        // no rights: syntax
        let p = Position::from_fen("4k3/8/8/8/8/8/8/4K2R w - - 0 1").unwrap();
        assert_eq!(classify_prediction(&p, sq("e1"), sq("g1")), ErrorCategory::Syntax);
        // blocked by own bishop
        let p = Position::from_fen("4k3/8/8/8/8/8/8/4KB1R w K - 0 1").unwrap();
        assert_eq!(
            classify_prediction(&p, sq("e1"), sq("g1")),
            ErrorCategory::PathObstruction
        );
        // through check
        let p = Position::from_fen("4kr2/8/8/8/8/8/8/4K2R w K - 0 1").unwrap();
        assert_eq!(
            classify_prediction(&p, sq("e1"), sq("g1")),
            ErrorCategory::PseudoLegal
        );
        assert_eq!(
            pseudo_legal_subcategory(&p, sq("e1"), sq("g1")).unwrap(),
            PseudoLegalSubcategory::NoCheckKing
        );
    }

    #[test]
    fn pawn_cases() {
        let p = Position::from_fen("4k3/8/8/8/4p3/8/4P3/4K3 w - - 0 1").unwrap();
        // diagonal to empty square
        assert_eq!(
            classify_prediction(&p, sq("e2"), sq("d3")),
            ErrorCategory::PathObstruction
        );
        // push into occupied square via double step
        assert_eq!(
            classify_prediction(&p, sq("e2"), sq("e4")),
            ErrorCategory::PathObstruction
        );
        assert_eq!(classify_prediction(&p, sq("e2"), sq("e3")), ErrorCategory::Legal);
        assert_eq!(classify_prediction(&p, sq("e2"), sq("e1")), ErrorCategory::Syntax);
    }

    #[test]
    fn subcategory_rejects_non_pseudo_legal() {
        let p = Position::initial();
        assert!(matches!(
            pseudo_legal_subcategory(&p, sq("e2"), sq("e4")),
            Err(ChessError::NotPseudoLegal { .. })
        ));
    }
}
