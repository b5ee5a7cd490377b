use std::collections::HashMap;

use crate::chess::{Move, PieceType};
use crate::notation::GameRecord;

fn move_code(m: Move) -> u64 {
    let promo = match m.promotion {
        None => 0,
        Some(PieceType::Queen) => 1,
        Some(PieceType::Rook) => 2,
        Some(PieceType::Bishop) => 3,
        Some(_) => 4,
    };
    m.from.index() as u64 | (m.to.index() as u64) << 6 | promo << 12
}

/// Trie of every move prefix occurring in a set of games.
///
/// Move sequences and their UCI token strings determine each other, so a
/// move-level prefix test is the same as a token-level one.
#[derive(Debug, Default)]
pub struct PrefixIndex {
    // (node << 16 | move code) -> child node; node 0 is the empty prefix
    edges: HashMap<u64, u32>,
    nodes: u32,
}

impl PrefixIndex {
    pub fn new() -> Self {
        PrefixIndex {
            edges: HashMap::new(),
            nodes: 1,
        }
    }

    pub fn build<'a, I: IntoIterator<Item = &'a GameRecord>>(games: I) -> Self {
        let mut idx = PrefixIndex::new();
        for g in games {
            idx.insert(&g.moves);
        }
        idx
    }

    pub fn insert(&mut self, moves: &[Move]) {
        let mut node = 0u32;
        for &m in moves {
            let key = (node as u64) << 16 | move_code(m);
            node = match self.edges.get(&key) {
                Some(&c) => c,
                None => {
                    let c = self.nodes;
                    self.nodes += 1;
                    self.edges.insert(key, c);
                    c
                }
            };
        }
    }

    /// True when `moves` is a prefix of (or equal to) some indexed game.
    pub fn contains_prefix(&self, moves: &[Move]) -> bool {
        let mut node = 0u32;
        for &m in moves {
            match self.edges.get(&((node as u64) << 16 | move_code(m))) {
                Some(&c) => node = c,
                None => return false,
            }
        }
        true
    }

    /// Number of distinct non-empty prefixes stored.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::parse_uci_line;

    #[test]
    fn prefix_membership() {
        let g = GameRecord::from_uci_line("e2e4 e7e5 g1f3 b8c6", "t").unwrap();
        let h = GameRecord::from_uci_line("e2e4 c7c5", "u").unwrap();
        let idx = PrefixIndex::build([&g, &h]);
        let p = |s: &str| parse_uci_line(s).unwrap();
        assert!(idx.contains_prefix(&p("e2e4 e7e5")));
        assert!(idx.contains_prefix(&p("e2e4 e7e5 g1f3 b8c6")));
        assert!(idx.contains_prefix(&p("e2e4 c7c5")));
        assert!(!idx.contains_prefix(&p("e2e4 c7c5 g1f3")));
        assert!(!idx.contains_prefix(&p("d2d4")));
        assert_eq!(idx.len(), 5);
    }
}
