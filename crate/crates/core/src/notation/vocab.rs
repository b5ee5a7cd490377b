use sha2::{Digest, Sha256};

use crate::chess::{PieceType, Square};

/// Integer id of a vocabulary symbol.
pub type TokenId = u32;

pub const VOCAB_SIZE: usize = 77;

/// Squares occupy ids 0..64 in index order (a1 = 0, h8 = 63).
const PIECE_BASE: u32 = 64;
const PROMO_BASE: u32 = 70;
pub const BOS: TokenId = 74;
pub const EOS: TokenId = 75;
pub const PAD: TokenId = 76;

/// Order of piece-type tokens after the squares.
const PIECE_ORDER: [PieceType; 6] = [
    PieceType::Pawn,
    PieceType::King,
    PieceType::Queen,
    PieceType::Rook,
    PieceType::Bishop,
    PieceType::Knight,
];
const PROMO_ORDER: [PieceType; 4] = [
    PieceType::Queen,
    PieceType::Rook,
    PieceType::Bishop,
    PieceType::Knight,
];

/// The fixed 77-symbol token inventory.
///
/// Layout: 64 square names, the six uppercase piece types `P K Q R B N`,
/// the four lowercase promotion pieces `q r b n`, then `BOS`, `EOS`, `PAD`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Square(Square),
    Piece(PieceType),
    Promotion(PieceType),
    Bos,
    Eos,
    Pad,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut symbols: Vec<String> = Square::all().map(|s| s.name()).collect();
        symbols.extend(PIECE_ORDER.iter().map(|p| p.letter().to_string()));
        symbols.extend(
            PROMO_ORDER
                .iter()
                .map(|p| p.letter().to_ascii_lowercase().to_string()),
        );
        symbols.extend(["BOS", "EOS", "PAD"].map(String::from));
        debug_assert_eq!(symbols.len(), VOCAB_SIZE);
        Vocabulary { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map(|i| i as TokenId)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// One symbol per line in id order.
    pub fn to_file_string(&self) -> String {
        let mut s = self.symbols.join("\n");
        s.push('\n');
        s
    }

    pub fn from_file_string(text: &str) -> Option<Vocabulary> {
        let symbols: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        let v = Vocabulary { symbols };
        (v == Vocabulary::new()).then_some(v)
    }

    /// SHA-256 of the vocabulary file contents, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

pub fn square_token(sq: Square) -> TokenId {
    sq.index() as TokenId
}

pub fn piece_token(kind: PieceType) -> TokenId {
    PIECE_BASE + PIECE_ORDER.iter().position(|&p| p == kind).unwrap() as TokenId
}

/// Token for a promotion target. `None` for pawn and king.
pub fn promotion_token(kind: PieceType) -> Option<TokenId> {
    PROMO_ORDER
        .iter()
        .position(|&p| p == kind)
        .map(|i| PROMO_BASE + i as TokenId)
}

pub fn token_kind(id: TokenId) -> Option<TokenKind> {
    match id {
        0..=63 => Square::new(id as u8).map(TokenKind::Square),
        64..=69 => Some(TokenKind::Piece(PIECE_ORDER[(id - PIECE_BASE) as usize])),
        70..=73 => Some(TokenKind::Promotion(PROMO_ORDER[(id - PROMO_BASE) as usize])),
        BOS => Some(TokenKind::Bos),
        EOS => Some(TokenKind::Eos),
        PAD => Some(TokenKind::Pad),
        _ => None,
    }
}

pub fn square_tokens() -> impl Iterator<Item = TokenId> {
    0..64
}

/// Ids of the six uppercase piece-type tokens.
pub fn piece_type_tokens() -> Vec<TokenId> {
    (PIECE_BASE..PROMO_BASE).collect()
}

/// Every id that is not a square token.
pub fn non_square_tokens() -> Vec<TokenId> {
    (64..VOCAB_SIZE as TokenId).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_layout() {
        let v = Vocabulary::new();
        assert_eq!(v.len(), 77);
        for id in 0..77 {
            let s = v.symbol(id).unwrap();
            assert_eq!(v.id(s), Some(id));
            assert!(token_kind(id).is_some());
        }
        assert_eq!(v.symbol(BOS), Some("BOS"));
        assert_eq!(v.symbol(piece_token(PieceType::Knight)), Some("N"));
        assert_eq!(v.symbol(promotion_token(PieceType::Queen).unwrap()), Some("q"));
        assert_eq!(promotion_token(PieceType::King), None);
        assert!(token_kind(77).is_none());
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocabulary::new();
        let text = v.to_file_string();
        assert_eq!(text.lines().count(), 77);
        assert_eq!(Vocabulary::from_file_string(&text), Some(v.clone()));
        assert!(Vocabulary::from_file_string("a1\nb1\n").is_none());
        assert_eq!(v.hash().len(), 64);
    }
}
