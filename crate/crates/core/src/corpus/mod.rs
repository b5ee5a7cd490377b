//! Corpus preparation: filtering, splits, probe sets and synthetic games.

mod prefix;
mod probe;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Move, Position};
use crate::notation::{derive_seed, GameRecord};

pub use prefix::PrefixIndex;
pub use probe::{
    build_probe_sets, prompt_piece_histogram, read_probes, verify_instance, write_probes, ProbeConfig,
    ProbeInstance, ProbeSets, ProbeTask, Prompt,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("not enough games: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("probe pool exhausted for {task}: wanted {wanted}, built {built} from {pool} games")]
    Exhausted {
        task: ProbeTask,
        wanted: usize,
        built: usize,
        pool: usize,
    },
    #[error("probe file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("inconsistent probe instance: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unit in which game and prefix lengths are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Half-moves.
    #[default]
    Plies,
    /// White+black move pairs, a trailing white move counting as one.
    FullMoves,
}

impl LengthUnit {
    pub fn measure(self, plies: usize) -> usize {
        match self {
            LengthUnit::Plies => plies,
            LengthUnit::FullMoves => plies.div_ceil(2),
        }
    }
}

impl std::str::FromStr for LengthUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plies" | "ply" => Ok(LengthUnit::Plies),
            "full-moves" | "full_moves" | "moves" => Ok(LengthUnit::FullMoves),
            _ => Err(format!("unknown length unit {s:?} (plies or full-moves)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub unit: LengthUnit,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_len: 10,
            max_len: 150,
            unit: LengthUnit::Plies,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub seen: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub too_short: usize,
    pub too_long: usize,
}

/// Streaming length filter and exact-duplicate remover.
#[derive(Debug, Default)]
pub struct GameFilter {
    cfg: FilterConfig,
    seen: HashSet<Vec<Move>>,
    pub stats: FilterStats,
}

impl GameFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        GameFilter {
            cfg,
            seen: HashSet::new(),
            stats: FilterStats::default(),
        }
    }

    /// Returns the game if it passes; updates the drop counters otherwise.
    pub fn accept(&mut self, game: GameRecord) -> Option<GameRecord> {
        self.stats.seen += 1;
        let len = self.cfg.unit.measure(game.ply_count());
        if len < self.cfg.min_len {
            self.stats.too_short += 1;
            return None;
        }
        if len > self.cfg.max_len {
            self.stats.too_long += 1;
            return None;
        }
        if !self.seen.insert(game.moves.clone()) {
            self.stats.duplicates += 1;
            return None;
        }
        self.stats.kept += 1;
        Some(game)
    }
}

/// Filters a collection, keeping first occurrences in input order.
pub fn filter_games<I>(games: I, cfg: &FilterConfig) -> (Vec<GameRecord>, FilterStats)
where
    I: IntoIterator<Item = GameRecord>,
{
    let mut f = GameFilter::new(cfg.clone());
    let kept = games.into_iter().filter_map(|g| f.accept(g)).collect();
    (kept, f.stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Sizes of the nested training tiers, e.g. `[small, medium, large]`.
    pub train_sizes: Vec<usize>,
    pub dev_size: usize,
    pub test_size: usize,
    pub probe_pool_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    /// One tier per entry of `train_sizes`, in the same order. Smaller tiers
    /// are prefixes of larger ones.
    pub train: Vec<Vec<GameRecord>>,
    pub dev: Vec<GameRecord>,
    pub test: Vec<GameRecord>,
    pub probe_pool: Vec<GameRecord>,
}

/// Shuffles once with `spec.seed` and cuts dev, test, probe pool and the
/// largest training tier from the front.
pub fn make_splits(games: &[GameRecord], spec: &SplitSpec) -> Result<Splits, CorpusError> {
    let largest = spec.train_sizes.iter().copied().max().unwrap_or(0);
    let needed = spec.dev_size + spec.test_size + spec.probe_pool_size + largest;
    if needed > games.len() {
        return Err(CorpusError::InsufficientData {
            needed,
            available: games.len(),
        });
    }
    let mut order: Vec<usize> = (0..games.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut cursor = 0;
    let mut take = |n: usize| -> Vec<GameRecord> {
        let out = order[cursor..cursor + n].iter().map(|&i| games[i].clone()).collect();
        cursor += n;
        out
    };
    let dev = take(spec.dev_size);
    let test = take(spec.test_size);
    let probe_pool = take(spec.probe_pool_size);
    let train_all = take(largest);
    let train = spec.train_sizes.iter().map(|&n| train_all[..n].to_vec()).collect();
    Ok(Splits {
        train,
        dev,
        test,
        probe_pool,
    })
}

/// Self-play games where each side picks uniformly among its legal moves,
/// stopping at mate, stalemate or `max_plies`. Game `i` depends only on
/// `(seed, i)`.
pub fn synth_games(count: usize, max_plies: usize, seed: u64) -> Vec<GameRecord> {
    (0..count).map(|i| synth_game(max_plies, seed, i)).collect()
}

/// Game `index` of the stream behind [`synth_games`].
pub fn synth_game(max_plies: usize, seed: u64, index: usize) -> GameRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let mut pos = Position::initial();
    let mut moves = Vec::new();
    while moves.len() < max_plies {
        let legal = pos.legal_moves();
        if legal.is_empty() {
            break;
        }
        let mv = legal[rng.gen_range(0..legal.len())];
        pos = pos.make_unchecked(mv);
        moves.push(mv);
    }
    GameRecord::new(moves, format!("synth:{seed}:{index}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(line: &str) -> GameRecord {
        GameRecord::from_uci_line(line, "t").unwrap()
    }

    #[test]
    fn dedup_and_length_counters() {
        let long = synth_games(1, 40, 3).remove(0);
        let gs = vec![long.clone(), long.clone(), game("e2e4 e7e5")];
        let (kept, stats) = filter_games(gs, &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(stats.too_short, 1);
        assert_eq!(stats.kept, 1);
    }

    #[test]
    fn full_move_unit_bounds() {
        let cfg = FilterConfig {
            unit: LengthUnit::FullMoves,
            ..FilterConfig::default()
        };
        let g = synth_games(1, 400, 11).remove(0);
        let mk = |plies: usize| GameRecord::new(g.moves[..plies].to_vec(), "x");
        let mut f = GameFilter::new(cfg);
        assert!(f.accept(mk(18)).is_none()); // 9 full moves
        assert!(f.accept(mk(19)).is_some()); // 10
        assert!(f.accept(mk(300)).is_some()); // 150
        if g.ply_count() >= 301 {
            assert!(f.accept(mk(301)).is_none()); // 151
            assert_eq!(f.stats.too_long, 1);
        }
        assert_eq!(f.stats.too_short, 1);
    }

    #[test]
    fn synth_is_deterministic_and_legal() {
        let a = synth_games(10, 40, 7);
        assert_eq!(a, synth_games(10, 40, 7));
        assert_ne!(a, synth_games(10, 40, 8));
        for g in &a {
            g.validate().unwrap();
            assert!(g.ply_count() <= 40);
        }
    }

    #[test]
    fn splits_are_disjoint_nested_and_seeded() {
        let games = synth_games(300, 30, 1);
        let spec = SplitSpec {
            train_sizes: vec![50, 100, 200],
            dev_size: 15,
            test_size: 15,
            probe_pool_size: 50,
            seed: 9,
        };
        let s = make_splits(&games, &spec).unwrap();
        assert_eq!(s, make_splits(&games, &spec).unwrap());
        let ids = |v: &[GameRecord]| v.iter().map(|g| g.source_id.clone()).collect::<HashSet<_>>();
        let (tr, dv, te, pp) = (ids(&s.train[2]), ids(&s.dev), ids(&s.test), ids(&s.probe_pool));
        assert_eq!((tr.len(), dv.len(), te.len(), pp.len()), (200, 15, 15, 50));
        for (a, b) in [(&tr, &dv), (&tr, &te), (&tr, &pp), (&dv, &te), (&dv, &pp), (&te, &pp)] {
            assert!(a.is_disjoint(b));
        }
        assert!(ids(&s.train[0]).is_subset(&ids(&s.train[1])));
        assert!(ids(&s.train[1]).is_subset(&tr));
        let big = SplitSpec {
            train_sizes: vec![250],
            ..spec
        };
        assert!(matches!(
            make_splits(&games, &big),
            Err(CorpusError::InsufficientData { needed: 330, available: 300 })
        ));
    }
}
