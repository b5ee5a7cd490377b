mod common;

use std::collections::HashSet;

use chessprobe::chess::{replay, PieceType};
use chessprobe::corpus::*;
use chessprobe::notation::GameRecord;
use common::uci_game;

fn fixture() -> Vec<GameRecord> {
    let long = synth_games(1, 30, 1).remove(0);
    vec![long.clone(), long, uci_game("e2e4 e7e5 g1f3")]
}

#[test]
fn filter_fixture_counts() {
    let (kept, st) = filter_games(fixture(), &FilterConfig::default());
    assert_eq!(kept.len(), 1);
    assert_eq!((st.seen, st.duplicates, st.too_short, st.too_long, st.kept), (3, 1, 1, 0, 1));
}

#[test]
fn length_bounds_are_inclusive() {
    let cfg = FilterConfig {
        min_len: 10,
        max_len: 12,
        unit: LengthUnit::Plies,
    };
    let games: Vec<GameRecord> = [9, 10, 12, 13].iter().map(|&n| synth_games(1, n, n as u64).remove(0)).collect();
    let (kept, st) = filter_games(games, &cfg);
    assert_eq!(kept.iter().map(|g| g.ply_count()).collect::<Vec<_>>(), vec![10, 12]);
    assert_eq!((st.too_short, st.too_long), (1, 1));
}

fn spec(seed: u64) -> SplitSpec {
    SplitSpec {
        train_sizes: vec![20, 60],
        dev_size: 10,
        test_size: 10,
        probe_pool_size: 30,
        seed,
    }
}

#[test]
fn splits_are_disjoint_nested_and_reproducible() {
    let games = synth_games(140, 40, 3);
    let s = make_splits(&games, &spec(4)).unwrap();
    assert_eq!(s, make_splits(&games, &spec(4)).unwrap());
    assert_ne!(s.dev, make_splits(&games, &spec(5)).unwrap().dev);
    assert_eq!(s.train[0][..], s.train[1][..20]);
    let mut seen = HashSet::new();
    for g in s.train[1].iter().chain(&s.dev).chain(&s.test).chain(&s.probe_pool) {
        assert!(seen.insert(g.uci_line()), "game in two splits");
    }
    assert_eq!(seen.len(), 110);
}

#[test]
fn too_few_games_is_an_error() {
    let games = synth_games(50, 40, 3);
    assert!(matches!(
        make_splits(&games, &spec(0)),
        Err(CorpusError::InsufficientData { needed: 110, available: 50 })
    ));
}

fn probe_cfg(n: usize, seed: u64) -> ProbeConfig {
    ProbeConfig {
        n,
        seed,
        ..ProbeConfig::default()
    }
}

#[test]
fn probe_sets_respect_every_construction_rule() {
    let pool = synth_games(400, 150, 10);
    let train = synth_games(200, 150, 11);
    let cfg = probe_cfg(150, 3);
    let sets = build_probe_sets(&pool, &train, &cfg).unwrap();
    assert_eq!(sets, build_probe_sets(&pool, &train, &cfg).unwrap());
    let seen = PrefixIndex::build(&train);
    for task in ProbeTask::ALL {
        let insts = sets.get(task);
        assert_eq!(insts.len(), 150);
        for inst in insts {
            assert_eq!(inst.task, task);
            verify_instance(inst).unwrap();
            assert!((51..=100).contains(&inst.prefix.len()));
            assert!(!seen.contains_prefix(&inst.prefix));
            let names: Vec<String> = inst.legal_answers.iter().map(|s| s.to_string()).collect();
            assert!(names.windows(2).all(|w| w[0] < w[1]), "answers sorted by name and distinct");
        }
    }
    for i in 0..150 {
        let ea = &sets.end_actual[i];
        let eo = &sets.end_other[i];
        let sa = &sets.start_actual[i];
        let so = &sets.start_other[i];
        assert!(ea.prefix == eo.prefix && eo.prefix == sa.prefix && sa.prefix == so.prefix);
        let pos = replay(&ea.prefix).unwrap();
        let (Prompt::Square(from), Prompt::Square(other)) = (ea.prompt, eo.prompt) else {
            panic!("End tasks prompt with squares");
        };
        assert_ne!(from, other);
        let (Prompt::Piece(kind), Prompt::Piece(other_kind)) = (sa.prompt, so.prompt) else {
            panic!("Start tasks prompt with pieces");
        };
        assert_eq!(pos.piece_at(from).unwrap().kind, kind);
        assert_ne!(kind, other_kind);
        assert_ne!(kind, PieceType::Pawn);
        assert_ne!(other_kind, PieceType::Pawn);
        assert_eq!(sa.exact_answer, Some(from));
        // the exact pair is the move actually played next
        let game = pool.iter().find(|g| g.source_id == ea.source_id).unwrap();
        let next = game.moves[ea.prefix.len()];
        assert_eq!((next.from, Some(next.to)), (from, ea.exact_answer));
    }
}

#[test]
fn exhausted_pool_is_reported() {
    let pool = synth_games(5, 150, 10);
    match build_probe_sets(&pool, &[], &probe_cfg(50, 0)) {
        Err(CorpusError::Exhausted { wanted: 50, pool: 5, built, .. }) => assert!(built <= 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn probe_files_round_trip() {
    let pool = synth_games(60, 150, 10);
    let sets = build_probe_sets(&pool, &[], &probe_cfg(20, 1)).unwrap();
    for task in ProbeTask::ALL {
        let mut buf = Vec::new();
        write_probes(&mut buf, sets.get(task)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["task", "prefix", "prompt", "legal_answers"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first.get("exact_answer").is_some(), task.is_actual());
        assert_eq!(read_probes(buf.as_slice()).unwrap(), sets.get(task));
    }
}

#[test]
fn full_move_prefix_unit_doubles_the_ply_range() {
    let pool = synth_games(80, 150, 12);
    let cfg = ProbeConfig {
        n: 20,
        min_prefix: 30,
        max_prefix: 40,
        unit: LengthUnit::FullMoves,
        seed: 2,
    };
    let sets = build_probe_sets(&pool, &[], &cfg).unwrap();
    assert!(sets.end_actual.iter().all(|i| (60..=80).contains(&i.prefix.len())));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

    #[test]
    fn any_seed_yields_verified_unseen_instances(seed in 0u64..1_000_000, lo in 20usize..60, span in 0usize..40) {
        let pool = synth_games(40, 150, seed);
        let train = synth_games(40, 150, seed ^ 0xABCD);
        let cfg = ProbeConfig { n: 10, min_prefix: lo, max_prefix: lo + span, unit: LengthUnit::Plies, seed };
        let sets = build_probe_sets(&pool, &train, &cfg).unwrap();
        let seen = PrefixIndex::build(&train);
        for task in ProbeTask::ALL {
            for inst in sets.get(task) {
                proptest::prop_assert!(verify_instance(inst).is_ok());
                proptest::prop_assert!((lo..=lo + span).contains(&inst.prefix.len()));
                proptest::prop_assert!(!seen.contains_prefix(&inst.prefix));
                proptest::prop_assert!(!inst.legal_answers.is_empty() || !task.is_actual());
            }
        }
    }
}
