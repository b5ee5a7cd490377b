use std::fmt;

use super::types::{Color, Move, Piece, PieceType, Square};
use super::ChessError;

pub const KNIGHT_DELTAS: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];
pub const KING_DELTAS: [(i8, i8); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
pub const ORTHOGONAL: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub const DIAGONAL: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CastlingRights {
    pub white_kingside: bool,
    pub white_queenside: bool,
    pub black_kingside: bool,
    pub black_queenside: bool,
}

impl CastlingRights {
    pub const ALL: CastlingRights = CastlingRights {
        white_kingside: true,
        white_queenside: true,
        black_kingside: true,
        black_queenside: true,
    };

    pub fn kingside(&self, c: Color) -> bool {
        match c {
            Color::White => self.white_kingside,
            Color::Black => self.black_kingside,
        }
    }

    pub fn queenside(&self, c: Color) -> bool {
        match c {
            Color::White => self.white_queenside,
            Color::Black => self.black_queenside,
        }
    }

    fn clear(&mut self, c: Color) {
        match c {
            Color::White => {
                self.white_kingside = false;
                self.white_queenside = false;
            }
            Color::Black => {
                self.black_kingside = false;
                self.black_queenside = false;
            }
        }
    }

    /// Drops any right whose rook home square is `sq`.
    fn touch_rook_square(&mut self, sq: Square) {
        match sq.index() {
            0 => self.white_queenside = false,
            7 => self.white_kingside = false,
            56 => self.black_queenside = false,
            63 => self.black_kingside = false,
            _ => {}
        }
    }
}

/// Full board state. Positions are immutable values; moves produce new ones.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Position {
    board: [Option<Piece>; 64],
    side_to_move: Color,
    castling: CastlingRights,
    en_passant: Option<Square>,
    halfmove_clock: u32,
    fullmove_number: u32,
}

pub const START_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

impl Position {
    pub fn initial() -> Position {
        Position::from_fen(START_FEN).expect("start FEN is valid")
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.board[sq.index()]
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn castling_rights(&self) -> CastlingRights {
        self.castling
    }

    pub fn en_passant(&self) -> Option<Square> {
        self.en_passant
    }

    pub fn fullmove_number(&self) -> u32 {
        self.fullmove_number
    }

    pub fn occupied_count(&self) -> usize {
        self.board.iter().filter(|p| p.is_some()).count()
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        Square::all().filter_map(move |sq| self.board[sq.index()].map(|p| (sq, p)))
    }

    pub fn king_square(&self, color: Color) -> Option<Square> {
        self.pieces()
            .find(|(_, p)| p.kind == PieceType::King && p.color == color)
            .map(|(sq, _)| sq)
    }

    /// True when any piece of `by` attacks `target` on the current board.
    pub fn is_attacked(&self, target: Square, by: Color) -> bool {
        for (df, dr) in KNIGHT_DELTAS {
            if let Some(s) = target.offset(df, dr) {
                if self.board[s.index()] == Some(Piece::new(PieceType::Knight, by)) {
                    return true;
                }
            }
        }
        for (df, dr) in KING_DELTAS {
            if let Some(s) = target.offset(df, dr) {
                if self.board[s.index()] == Some(Piece::new(PieceType::King, by)) {
                    return true;
                }
            }
        }
        // a pawn of `by` attacks target from one rank "behind" it
        let back = -by.forward();
        for df in [-1, 1] {
            if let Some(s) = target.offset(df, back) {
                if self.board[s.index()] == Some(Piece::new(PieceType::Pawn, by)) {
                    return true;
                }
            }
        }
        for (dirs, slider) in [(ORTHOGONAL, PieceType::Rook), (DIAGONAL, PieceType::Bishop)] {
            for (df, dr) in dirs {
                let mut cur = target;
                while let Some(s) = cur.offset(df, dr) {
                    if let Some(p) = self.board[s.index()] {
                        if p.color == by && (p.kind == slider || p.kind == PieceType::Queen) {
                            return true;
                        }
                        break;
                    }
                    cur = s;
                }
            }
        }
        false
    }

    pub fn is_check(&self, color: Color) -> bool {
        match self.king_square(color) {
            Some(k) => self.is_attacked(k, color.opposite()),
            None => false,
        }
    }

    /// Moves that obey piece movement rules, ignoring whether the own king is
    /// left in check. Castling is only emitted when its full legality holds.
    pub fn pseudo_legal_moves(&self) -> Vec<Move> {
        let mut out = Vec::with_capacity(48);
        let us = self.side_to_move;
        for (from, piece) in self.pieces() {
            if piece.color != us {
                continue;
            }
            self.piece_moves(from, piece, &mut out);
        }
        out
    }

    fn piece_moves(&self, from: Square, piece: Piece, out: &mut Vec<Move>) {
        let us = piece.color;
        match piece.kind {
            PieceType::Pawn => self.pawn_moves(from, us, out),
            PieceType::Knight => self.leaper_moves(from, us, &KNIGHT_DELTAS, out),
            PieceType::King => {
                self.leaper_moves(from, us, &KING_DELTAS, out);
                self.castling_moves(from, us, out);
            }
            PieceType::Bishop => self.slider_moves(from, us, &DIAGONAL, out),
            PieceType::Rook => self.slider_moves(from, us, &ORTHOGONAL, out),
            PieceType::Queen => {
                self.slider_moves(from, us, &DIAGONAL, out);
                self.slider_moves(from, us, &ORTHOGONAL, out);
            }
        }
    }

    fn push_pawn_move(from: Square, to: Square, us: Color, out: &mut Vec<Move>) {
        if to.rank() == us.opposite().back_rank() {
            for p in PieceType::PROMOTIONS {
                out.push(Move::with_promotion(from, to, p));
            }
        } else {
            out.push(Move::new(from, to));
        }
    }

    fn pawn_moves(&self, from: Square, us: Color, out: &mut Vec<Move>) {
        let fwd = us.forward();
        if let Some(one) = from.offset(0, fwd) {
            if self.board[one.index()].is_none() {
                Self::push_pawn_move(from, one, us, out);
                if from.rank() == us.pawn_rank() {
                    if let Some(two) = one.offset(0, fwd) {
                        if self.board[two.index()].is_none() {
                            out.push(Move::new(from, two));
                        }
                    }
                }
            }
        }
        for df in [-1, 1] {
            if let Some(to) = from.offset(df, fwd) {
                match self.board[to.index()] {
                    Some(p) if p.color != us => Self::push_pawn_move(from, to, us, out),
                    None if self.en_passant == Some(to) => out.push(Move::new(from, to)),
                    _ => {}
                }
            }
        }
    }

    fn leaper_moves(&self, from: Square, us: Color, deltas: &[(i8, i8)], out: &mut Vec<Move>) {
        for &(df, dr) in deltas {
            if let Some(to) = from.offset(df, dr) {
                match self.board[to.index()] {
                    Some(p) if p.color == us => {}
                    _ => out.push(Move::new(from, to)),
                }
            }
        }
    }

    fn slider_moves(&self, from: Square, us: Color, dirs: &[(i8, i8)], out: &mut Vec<Move>) {
        for &(df, dr) in dirs {
            let mut cur = from;
            while let Some(to) = cur.offset(df, dr) {
                match self.board[to.index()] {
                    None => out.push(Move::new(from, to)),
                    Some(p) => {
                        if p.color != us {
                            out.push(Move::new(from, to));
                        }
                        break;
                    }
                }
                cur = to;
            }
        }
    }

    fn castling_moves(&self, from: Square, us: Color, out: &mut Vec<Move>) {
        let rank = us.back_rank();
        if from != Square::from_coords(4, rank).unwrap() {
            return;
        }
        let them = us.opposite();
        let sq = |f: u8| Square::from_coords(f, rank).unwrap();
        let empty = |f: u8| self.board[sq(f).index()].is_none();
        let safe = |f: u8| !self.is_attacked(sq(f), them);
        if self.castling.kingside(us) && empty(5) && empty(6) && safe(4) && safe(5) && safe(6) {
            out.push(Move::new(from, sq(6)));
        }
        if self.castling.queenside(us)
            && empty(3)
            && empty(2)
            && empty(1)
            && safe(4)
            && safe(3)
            && safe(2)
        {
            out.push(Move::new(from, sq(2)));
        }
    }

    pub fn legal_moves(&self) -> Vec<Move> {
        let us = self.side_to_move;
        self.pseudo_legal_moves()
            .into_iter()
            .filter(|m| !self.make_unchecked(*m).is_check(us))
            .collect()
    }

    pub fn is_legal(&self, mv: Move) -> bool {
        match self.board[mv.from.index()] {
            Some(p) if p.color == self.side_to_move => {
                let mut buf = Vec::new();
                self.piece_moves(mv.from, p, &mut buf);
                buf.contains(&mv) && !self.make_unchecked(mv).is_check(self.side_to_move)
            }
            _ => false,
        }
    }

    /// Legal moves starting at `from`.
    pub fn legal_moves_from(&self, from: Square) -> Vec<Move> {
        let us = self.side_to_move;
        let Some(p) = self.board[from.index()].filter(|p| p.color == us) else {
            return Vec::new();
        };
        let mut buf = Vec::new();
        self.piece_moves(from, p, &mut buf);
        buf.retain(|m| !self.make_unchecked(*m).is_check(us));
        buf
    }

    pub fn apply(&self, mv: Move) -> Result<Position, ChessError> {
        if !self.is_legal(mv) {
            return Err(ChessError::IllegalMove {
                mv: mv.uci(),
                fen: self.to_fen(),
            });
        }
        Ok(self.make_unchecked(mv))
    }

    /// Executes `mv` without validating it. Used for legality filtering and
    /// replaying moves already known to be legal.
    pub(crate) fn make_unchecked(&self, mv: Move) -> Position {
        let mut next = self.clone();
        let Some(piece) = self.board[mv.from.index()] else {
            return next;
        };
        let us = piece.color;
        let captured = self.board[mv.to.index()];
        next.board[mv.from.index()] = None;

        let mut placed = piece;
        if piece.kind == PieceType::Pawn {
            if Some(mv.to) == self.en_passant && captured.is_none() && mv.from.file() != mv.to.file()
            {
                let victim = Square::from_coords(mv.to.file(), mv.from.rank()).unwrap();
                next.board[victim.index()] = None;
            }
            if let Some(promo) = mv.promotion {
                placed = Piece::new(promo, us);
            }
        }
        next.board[mv.to.index()] = Some(placed);

        if piece.kind == PieceType::King && mv.from.file() == 4 && mv.from.rank() == us.back_rank()
        {
            let rank = us.back_rank();
            let rook_hop = match mv.to.file() {
                6 => Some((7, 5)),
                2 => Some((0, 3)),
                _ => None,
            };
            if let Some((rf, rt)) = rook_hop {
                let rfrom = Square::from_coords(rf, rank).unwrap();
                let rto = Square::from_coords(rt, rank).unwrap();
                next.board[rto.index()] = next.board[rfrom.index()].take();
            }
        }

        if piece.kind == PieceType::King {
            next.castling.clear(us);
        }
        next.castling.touch_rook_square(mv.from);
        next.castling.touch_rook_square(mv.to);

        next.en_passant = None;
        if piece.kind == PieceType::Pawn && (mv.to.rank() as i8 - mv.from.rank() as i8).abs() == 2 {
            next.en_passant = mv.from.offset(0, us.forward());
        }

        next.halfmove_clock = if piece.kind == PieceType::Pawn || captured.is_some() {
            0
        } else {
            self.halfmove_clock + 1
        };
        if us == Color::Black {
            next.fullmove_number += 1;
        }
        next.side_to_move = us.opposite();
        next
    }

    /// Checks structural invariants: one king per side, no pawns on the
    /// back ranks, a sensible en-passant square and castling rights backed by
    /// pieces on their home squares.
    pub fn validate(&self) -> Result<(), ChessError> {
        for c in Color::BOTH {
            let kings = self
                .pieces()
                .filter(|(_, p)| p.kind == PieceType::King && p.color == c)
                .count();
            if kings != 1 {
                return Err(ChessError::InvalidPosition(format!(
                    "{c:?} has {kings} kings"
                )));
            }
        }
        if self
            .pieces()
            .any(|(sq, p)| p.kind == PieceType::Pawn && (sq.rank() == 0 || sq.rank() == 7))
        {
            return Err(ChessError::InvalidPosition("pawn on back rank".into()));
        }
        if let Some(ep) = self.en_passant {
            let expected = match self.side_to_move {
                Color::White => 5,
                Color::Black => 2,
            };
            if ep.rank() != expected {
                return Err(ChessError::InvalidPosition(format!(
                    "en-passant square {ep} on wrong rank"
                )));
            }
        }
        let home = |f: u8, r: u8, kind: PieceType, c: Color| {
            self.board[Square::from_coords(f, r).unwrap().index()] == Some(Piece::new(kind, c))
        };
        for c in Color::BOTH {
            let r = c.back_rank();
            if (self.castling.kingside(c) && !(home(4, r, PieceType::King, c) && home(7, r, PieceType::Rook, c)))
                || (self.castling.queenside(c)
                    && !(home(4, r, PieceType::King, c) && home(0, r, PieceType::Rook, c)))
            {
                return Err(ChessError::InvalidPosition(format!(
                    "{c:?} castling right without king and rook at home"
                )));
            }
        }
        if self.is_check(self.side_to_move.opposite()) {
            return Err(ChessError::InvalidPosition(
                "side not to move is in check".into(),
            ));
        }
        Ok(())
    }

    pub fn from_fen(fen: &str) -> Result<Position, ChessError> {
        let bad = |why: &str| ChessError::BadFen(format!("{why}: {fen:?}"));
        let mut parts = fen.split_whitespace();
        let placement = parts.next().ok_or_else(|| bad("empty"))?;
        let mut board = [None; 64];
        let ranks: Vec<&str> = placement.split('/').collect();
        if ranks.len() != 8 {
            return Err(bad("need 8 ranks"));
        }
        for (i, row) in ranks.iter().enumerate() {
            let rank = 7 - i as u8;
            let mut file = 0u8;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    file += d as u8;
                } else {
                    let p = Piece::from_fen_char(c).ok_or_else(|| bad("bad piece"))?;
                    let sq = Square::from_coords(file, rank).ok_or_else(|| bad("rank overflow"))?;
                    board[sq.index()] = Some(p);
                    file += 1;
                }
            }
            if file != 8 {
                return Err(bad("rank length"));
            }
        }
        let side_to_move = match parts.next().unwrap_or("w") {
            "w" => Color::White,
            "b" => Color::Black,
            _ => return Err(bad("side to move")),
        };
        let mut castling = CastlingRights::default();
        let cr = parts.next().unwrap_or("-");
        if cr != "-" {
            for c in cr.chars() {
                match c {
                    'K' => castling.white_kingside = true,
                    'Q' => castling.white_queenside = true,
                    'k' => castling.black_kingside = true,
                    'q' => castling.black_queenside = true,
                    _ => return Err(bad("castling")),
                }
            }
        }
        let en_passant = match parts.next().unwrap_or("-") {
            "-" => None,
            s => Some(Square::parse(s).ok_or_else(|| bad("en passant"))?),
        };
        let halfmove_clock = parts
            .next()
            .map(|s| s.parse().map_err(|_| bad("halfmove")))
            .transpose()?
            .unwrap_or(0);
        let fullmove_number = parts
            .next()
            .map(|s| s.parse().map_err(|_| bad("fullmove")))
            .transpose()?
            .unwrap_or(1);
        let pos = Position {
            board,
            side_to_move,
            castling,
            en_passant,
            halfmove_clock,
            fullmove_number,
        };
        pos.validate()?;
        Ok(pos)
    }

    pub fn to_fen(&self) -> String {
        let mut s = String::new();
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                match self.board[Square::from_coords(file, rank).unwrap().index()] {
                    None => empty += 1,
                    Some(p) => {
                        if empty > 0 {
                            s.push_str(&empty.to_string());
                            empty = 0;
                        }
                        s.push(p.fen_char());
                    }
                }
            }
            if empty > 0 {
                s.push_str(&empty.to_string());
            }
            if rank > 0 {
                s.push('/');
            }
        }
        s.push(' ');
        s.push(match self.side_to_move {
            Color::White => 'w',
            Color::Black => 'b',
        });
        s.push(' ');
        let c = self.castling;
        let mut cr = String::new();
        for (flag, ch) in [
            (c.white_kingside, 'K'),
            (c.white_queenside, 'Q'),
            (c.black_kingside, 'k'),
            (c.black_queenside, 'q'),
        ] {
            if flag {
                cr.push(ch);
            }
        }
        if cr.is_empty() {
            cr.push('-');
        }
        s.push_str(&cr);
        s.push(' ');
        match self.en_passant {
            Some(sq) => s.push_str(&sq.name()),
            None => s.push('-'),
        }
        s.push_str(&format!(" {} {}", self.halfmove_clock, self.fullmove_number));
        s
    }

    /// Text diagram with rank 8 on top, `.` for empty squares.
    pub fn diagram(&self) -> String {
        let mut s = String::new();
        for rank in (0..8).rev() {
            s.push_str(&format!("{} ", rank + 1));
            for file in 0..8 {
                let c = self.board[Square::from_coords(file, rank).unwrap().index()]
                    .map(Piece::fen_char)
                    .unwrap_or('.');
                s.push(' ');
                s.push(c);
            }
            s.push('\n');
        }
        s.push_str("   a b c d e f g h\n");
        s
    }
}

impl fmt::Debug for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Position({})", self.to_fen())
    }
}

impl Default for Position {
    fn default() -> Self {
        Position::initial()
    }
}

/// Replays UCI moves from the start position, validating each one.
pub fn replay<'a, I>(moves: I) -> Result<Position, ChessError>
where
    I: IntoIterator<Item = &'a Move>,
{
    let mut pos = Position::initial();
    for mv in moves {
        pos = pos.apply(*mv)?;
    }
    Ok(pos)
}

/// Parses a space-separated UCI move string.
pub fn parse_uci_line(line: &str) -> Result<Vec<Move>, ChessError> {
    line.split_whitespace().map(|t| t.parse()).collect()
}
