use crate::chess::{Move, PieceType, Position, Square};

use super::{GameRecord, NotationError};

/// Resolves a SAN token (`Bb5`, `exd5`, `Nbd7`, `e8=Q`, `O-O`) to the unique
/// legal move it denotes in `pos`. Check and annotation suffixes are ignored.
pub fn san_to_move(pos: &Position, san: &str) -> Result<Move, NotationError> {
    let no_match = || NotationError::SanNoMatch(san.to_string());
    let syntax = || NotationError::SanSyntax(san.to_string());

    let core = san.trim_end_matches(['+', '#', '!', '?']);
    let core = core.strip_suffix("e.p.").unwrap_or(core).trim_end();
    if core.is_empty() {
        return Err(syntax());
    }

    let us = pos.side_to_move();
    let castle_target = match core {
        "O-O" | "0-0" => Some(6),
        "O-O-O" | "0-0-0" => Some(2),
        _ => None,
    };
    if let Some(file) = castle_target {
        let rank = us.back_rank();
        let from = Square::from_coords(4, rank).unwrap();
        let to = Square::from_coords(file, rank).unwrap();
        let is_king = pos.piece_at(from).is_some_and(|p| p.kind == PieceType::King);
        let mv = Move::new(from, to);
        return if is_king && pos.is_legal(mv) {
            Ok(mv)
        } else {
            Err(no_match())
        };
    }

    let mut chars: Vec<char> = core.chars().collect();
    let kind = match chars.first() {
        Some(&c) if "NBRQK".contains(c) => {
            chars.remove(0);
            PieceType::from_letter(c).unwrap()
        }
        Some(c) if ('a'..='h').contains(c) => PieceType::Pawn,
        _ => return Err(syntax()),
    };

    let mut promotion = None;
    if kind == PieceType::Pawn {
        if let Some(&last) = chars.last() {
            if "NBRQ".contains(last) {
                promotion = PieceType::from_letter(last);
                chars.pop();
                if chars.last() == Some(&'=') {
                    chars.pop();
                }
            }
        }
    }
    if chars.len() < 2 {
        return Err(syntax());
    }
    let dest: String = chars[chars.len() - 2..].iter().collect();
    let to = Square::parse(&dest).ok_or_else(syntax)?;
    let mut from_file = None;
    let mut from_rank = None;
    for &c in &chars[..chars.len() - 2] {
        match c {
            'a'..='h' => from_file = Some(c as u8 - b'a'),
            '1'..='8' => from_rank = Some(c as u8 - b'1'),
            'x' | ':' | '-' => {}
            _ => return Err(syntax()),
        }
    }

    let candidates: Vec<Move> = pos
        .legal_moves()
        .into_iter()
        .filter(|m| {
            m.to == to
                && m.promotion == promotion
                && pos.piece_at(m.from).is_some_and(|p| p.kind == kind)
                && from_file.is_none_or(|f| m.from.file() == f)
                && from_rank.is_none_or(|r| m.from.rank() == r)
        })
        .collect();
    match candidates.as_slice() {
        [] => Err(no_match()),
        [mv] => Ok(*mv),
        _ => Err(NotationError::SanAmbiguous {
            san: san.to_string(),
            candidates: candidates.iter().map(Move::uci).collect(),
        }),
    }
}

/// One ply where prompting with the mover's piece type alone would not
/// identify a unique piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityEntry {
    pub ply: usize,
    pub piece: PieceType,
    pub candidates: Vec<Square>,
}

/// Lists every ply at which more than one piece of the mover's type could
/// legally move, i.e. where a piece-type prompt is ambiguous.
pub fn san_ambiguity_report(game: &GameRecord) -> Result<Vec<AmbiguityEntry>, NotationError> {
    let mut pos = Position::initial();
    let mut out = Vec::new();
    for (ply, &mv) in game.moves.iter().enumerate() {
        let piece = pos
            .piece_at(mv.from)
            .ok_or_else(|| NotationError::IllegalMove {
                ply,
                source: crate::chess::ChessError::IllegalMove {
                    mv: mv.uci(),
                    fen: pos.to_fen(),
                },
            })?
            .kind;
        let candidates: Vec<Square> = crate::chess::movable_starts(&pos, piece).into_iter().collect();
        if candidates.len() > 1 {
            out.push(AmbiguityEntry {
                ply,
                piece,
                candidates,
            });
        }
        pos = pos
            .apply(mv)
            .map_err(|e| NotationError::IllegalMove { ply, source: e })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::{parse_uci_line, replay};

    fn example() -> Position {
        replay(&parse_uci_line("e2e4 e7e5 g1f3 b8c6 d2d4 h7h6").unwrap()).unwrap()
    }

    #[test]
    fn resolves_basic_san() {
        assert_eq!(san_to_move(&example(), "Bb5").unwrap().uci(), "f1b5");
        assert_eq!(san_to_move(&Position::initial(), "e4").unwrap().uci(), "e2e4");
        assert_eq!(san_to_move(&Position::initial(), "Nf3").unwrap().uci(), "g1f3");
        assert_eq!(san_to_move(&example(), "dxe5").unwrap().uci(), "d4e5");
        assert_eq!(san_to_move(&example(), "Nxe5!?").unwrap().uci(), "f3e5");
    }

    #[test]
    fn castling_and_errors() {
        assert!(matches!(
            san_to_move(&Position::initial(), "O-O"),
            Err(NotationError::SanNoMatch(_))
        ));
        let p = Position::from_fen("r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1").unwrap();
        assert_eq!(san_to_move(&p, "O-O").unwrap().uci(), "e1g1");
        assert_eq!(san_to_move(&p, "O-O-O+").unwrap().uci(), "e1c1");
        assert!(matches!(san_to_move(&p, "Rb2"), Err(NotationError::SanNoMatch(_))));
        assert!(matches!(san_to_move(&p, "Zz9"), Err(NotationError::SanSyntax(_))));
    }

    #[test]
    fn disambiguation() {
        let p = Position::from_fen("4k3/8/8/8/8/8/4K3/R6R w - - 0 1").unwrap();
        assert!(matches!(
            san_to_move(&p, "Rf1"),
            Err(NotationError::SanAmbiguous { .. })
        ));
        assert_eq!(san_to_move(&p, "Rhf1").unwrap().uci(), "h1f1");
        assert_eq!(san_to_move(&p, "Raf1").unwrap().uci(), "a1f1");
        let p = Position::from_fen("4k3/8/8/8/8/8/4P3/4K3 w - - 0 1").unwrap();
        assert_eq!(san_to_move(&p, "e3").unwrap().uci(), "e2e3");
    }

    #[test]
    fn promotion_san() {
        let p = Position::from_fen("8/4P3/8/8/8/8/8/k3K3 w - - 0 1").unwrap();
        assert_eq!(san_to_move(&p, "e8=Q").unwrap().uci(), "e7e8q");
        assert_eq!(san_to_move(&p, "e8N+").unwrap().uci(), "e7e8n");
        assert!(san_to_move(&p, "e8").is_err());
    }

    #[test]
    fn ambiguity_report_examples() {
        let g = GameRecord::from_uci_line("e2e4 e7e5 g1f3 b8c6 d2d4 h7h6 f1b5", "t").unwrap();
        let rep = san_ambiguity_report(&g).unwrap();
        let last = rep.iter().find(|e| e.ply == 6).unwrap();
        assert_eq!(last.piece, PieceType::Bishop);
        let names: Vec<String> = last.candidates.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["c1", "f1"]);
        // opening pawn move: all eight pawns can move
        assert_eq!(rep[0].ply, 0);
        assert_eq!(rep[0].candidates.len(), 8);
        // white's king knight was traded off, so b1 is the only knight
        let single = GameRecord::from_uci_line("g1f3 e7e5 f3e5 d7d6 e5c6 b7c6 b1c3", "t").unwrap();
        let rep = san_ambiguity_report(&single).unwrap();
        assert!(rep.iter().all(|e| e.ply != 6));
    }
}
