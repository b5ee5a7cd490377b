mod common;

use std::collections::BTreeSet;

use chessprobe::chess::*;
use common::oracle::Board;
use common::playout;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KIWIPETE: &str = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1";
const ENDGAME: &str = "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1";
const PROMOTIONS: &str = "r3k2r/Pppp1ppp/1b3nbN/nP6/BBP1P3/q4N2/Pp1P2PP/R2Q1RK1 w kq - 0 1";

#[test]
fn perft_from_start_matches_independent_enumerator() {
    let pos = Position::initial();
    let oracle = Board::start();
    for (depth, expected) in [(1, 20), (2, 400), (3, 8_902), (4, 197_281)] {
        assert_eq!(oracle.perft(depth), expected, "oracle depth {depth}");
        assert_eq!(perft(&pos, depth), expected, "depth {depth}");
    }
}

#[test]
fn perft_on_tricky_positions_agrees_with_oracle() {
    for (fen, depths) in [(KIWIPETE, 3), (ENDGAME, 4), (PROMOTIONS, 3)] {
        let pos = Position::from_fen(fen).unwrap();
        let oracle = Board::from_fen(fen);
        for d in 1..=depths {
            assert_eq!(perft(&pos, d), oracle.perft(d), "{fen} depth {d}");
        }
    }
    // published reference counts
    assert_eq!(perft(&Position::from_fen(KIWIPETE).unwrap(), 2), 2_039);
    assert_eq!(perft(&Position::from_fen(ENDGAME).unwrap(), 3), 2_812);
    assert_eq!(perft(&Position::from_fen(PROMOTIONS).unwrap(), 2), 264);
}

#[test]
fn legal_move_sets_agree_along_random_playouts() {
    for seed in 0..150 {
        for (pos, _) in playout(seed, 200) {
            let ours: BTreeSet<String> = pos.legal_moves().iter().map(|m| m.uci()).collect();
            let theirs: BTreeSet<String> = Board::from_fen(&pos.to_fen()).legal().iter().map(|m| m.uci()).collect();
            assert_eq!(ours, theirs, "{}", pos.to_fen());
        }
    }
}

#[test]
fn classifier_agrees_with_legal_moves_on_fuzzed_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut seed = 1000;
    while checked < 12_000 {
        for (pos, _) in playout(seed, 120).into_iter().step_by(3) {
            let legal: BTreeSet<(Square, Square)> = pos.legal_moves().iter().map(|m| (m.from, m.to)).collect();
            for _ in 0..4 {
                let from = Square::new(rng.gen_range(0..64)).unwrap();
                let to = Square::new(rng.gen_range(0..64)).unwrap();
                let cat = classify_prediction(&pos, from, to);
                assert_eq!(cat == ErrorCategory::Legal, legal.contains(&(from, to)), "{} {from}{to}", pos.to_fen());
                checked += 1;
            }
            // and every legal pair from a random own piece
            let own: Vec<Square> = pos.pieces().filter(|(_, p)| p.color == pos.side_to_move()).map(|(s, _)| s).collect();
            let from = own[rng.gen_range(0..own.len())];
            for to in Square::all() {
                let cat = classify_prediction(&pos, from, to);
                assert_eq!(cat == ErrorCategory::Legal, legal.contains(&(from, to)));
                checked += 1;
            }
        }
        seed += 1;
    }
}

#[test]
fn running_example_oracle_sets() {
    let pos = replay(&parse_uci_line(common::EXAMPLE_PREFIX).unwrap()).unwrap();
    let sq = |names: &[&str]| names.iter().map(|n| n.parse::<Square>().unwrap()).collect::<BTreeSet<_>>();
    assert_eq!(legal_destinations(&pos, "f1".parse().unwrap()), sq(&["e2", "d3", "c4", "b5", "a6"]));
    assert_eq!(legal_destinations(&pos, "f3".parse().unwrap()), sq(&["d2", "g1", "h4", "g5", "e5"]));
    assert_eq!(movable_starts(&pos, PieceType::Bishop), sq(&["f1", "c1"]));
    assert_eq!(movable_starts(&pos, PieceType::Knight), sq(&["f3", "b1"]));
}

fn chebyshev(a: Square, b: Square) -> u8 {
    (a.file() as i8 - b.file() as i8).unsigned_abs().max((a.rank() as i8 - b.rank() as i8).unsigned_abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fen_round_trip_preserves_position(seed in 0u64..10_000, ply in 0usize..120) {
        let positions = playout(seed, ply);
        let (pos, _) = positions.last().unwrap();
        let again = Position::from_fen(&pos.to_fen()).unwrap();
        prop_assert_eq!(again.to_fen(), pos.to_fen());
        let a: BTreeSet<String> = pos.legal_moves().iter().map(|m| m.uci()).collect();
        let b: BTreeSet<String> = again.legal_moves().iter().map(|m| m.uci()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn legal_moves_never_leave_king_attacked(seed in 0u64..10_000, ply in 0usize..120) {
        let (pos, _) = playout(seed, ply).pop().unwrap();
        let us = pos.side_to_move();
        for mv in pos.legal_moves() {
            let next = pos.apply(mv).unwrap();
            prop_assert!(!next.is_check(us));
            prop_assert_eq!(next.side_to_move(), us.opposite());
            prop_assert!(next.validate().is_ok());
        }
    }

    #[test]
    fn categories_partition_and_are_consistent(seed in 0u64..10_000, ply in 0usize..120, f in 0u8..64, t in 0u8..64) {
        let (pos, _) = playout(seed, ply).pop().unwrap();
        let (from, to) = (Square::new(f).unwrap(), Square::new(t).unwrap());
        let cat = classify_prediction(&pos, from, to);
        prop_assert_eq!(path_length(from, to), chebyshev(from, to));
        match cat {
            ErrorCategory::Legal => prop_assert!(legal_destinations(&pos, from).contains(&to)),
            ErrorCategory::Unreachable => prop_assert!(!geometry_any(from, to)),
            ErrorCategory::Syntax => prop_assert!(geometry_any(from, to)),
            ErrorCategory::PathObstruction | ErrorCategory::PseudoLegal => {
                let p = pos.piece_at(from).unwrap();
                prop_assert_eq!(p.color, pos.side_to_move());
                prop_assert!(geometry_type(p.kind, p.color, from, to));
            }
        }
        if cat == ErrorCategory::PseudoLegal {
            prop_assert!(pseudo_legal_subcategory(&pos, from, to).is_ok());
        } else {
            prop_assert!(pseudo_legal_subcategory(&pos, from, to).is_err());
        }
    }

    #[test]
    fn movable_starts_match_legal_move_origins(seed in 0u64..10_000, ply in 0usize..120) {
        let (pos, _) = playout(seed, ply).pop().unwrap();
        for kind in PieceType::ALL {
            for s in movable_starts(&pos, kind) {
                prop_assert_eq!(pos.piece_at(s).unwrap().kind, kind);
                prop_assert!(!legal_destinations(&pos, s).is_empty());
            }
        }
    }
}
