#![allow(dead_code)]

pub mod oracle;

use chessprobe::chess::{Move, Position};
use chessprobe::notation::GameRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXAMPLE_PREFIX: &str = "e2e4 e7e5 g1f3 b8c6 d2d4 h7h6";

/// Positions visited by a uniformly random legal playout.
pub fn playout(seed: u64, max_plies: usize) -> Vec<(Position, Vec<Move>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Position::initial();
    let mut moves = Vec::new();
    let mut out = vec![(pos.clone(), moves.clone())];
    for _ in 0..max_plies {
        let legal = pos.legal_moves();
        if legal.is_empty() {
            break;
        }
        let mv = legal[rng.gen_range(0..legal.len())];
        pos = pos.apply(mv).unwrap();
        moves.push(mv);
        out.push((pos.clone(), moves.clone()));
    }
    out
}

pub fn uci_game(line: &str) -> GameRecord {
    GameRecord::from_uci_line(line, "test").unwrap()
}
