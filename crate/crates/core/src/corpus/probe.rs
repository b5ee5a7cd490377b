use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LengthUnit, PrefixIndex};
use crate::chess::{legal_destinations, movable_starts, parse_uci_line, replay, Move, PieceType, Position, Square};
use crate::notation::{derive_seed, GameRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeTask {
    EndActual,
    EndOther,
    StartActual,
    StartOther,
}

impl ProbeTask {
    pub const ALL: [ProbeTask; 4] = [
        ProbeTask::EndActual,
        ProbeTask::EndOther,
        ProbeTask::StartActual,
        ProbeTask::StartOther,
    ];

    /// End tasks prompt with a start square; Start tasks with a piece type.
    pub fn is_end(self) -> bool {
        matches!(self, ProbeTask::EndActual | ProbeTask::EndOther)
    }

    pub fn is_actual(self) -> bool {
        matches!(self, ProbeTask::EndActual | ProbeTask::StartActual)
    }

    pub fn label(self) -> &'static str {
        match self {
            ProbeTask::EndActual => "End-Actual",
            ProbeTask::EndOther => "End-Other",
            ProbeTask::StartActual => "Start-Actual",
            ProbeTask::StartOther => "Start-Other",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            ProbeTask::EndActual => "end_actual",
            ProbeTask::EndOther => "end_other",
            ProbeTask::StartActual => "start_actual",
            ProbeTask::StartOther => "start_other",
        }
    }
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prompt {
    Square(Square),
    Piece(PieceType),
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prompt::Square(s) => write!(f, "{s}"),
            Prompt::Piece(p) => write!(f, "{}", p.letter()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeInstance {
    pub task: ProbeTask,
    pub prefix: Vec<Move>,
    pub prompt: Prompt,
    pub exact_answer: Option<Square>,
    /// Sorted by square name.
    pub legal_answers: Vec<Square>,
    pub source_id: String,
}

#[derive(Serialize, Deserialize)]
struct ProbeLine {
    task: ProbeTask,
    prefix: String,
    prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact_answer: Option<String>,
    legal_answers: Vec<String>,
    #[serde(default)]
    source_id: String,
}

impl ProbeInstance {
    pub fn position(&self) -> Position {
        replay(&self.prefix).expect("probe prefixes are legal")
    }

    fn to_line(&self) -> ProbeLine {
        ProbeLine {
            task: self.task,
            prefix: self.prefix.iter().map(Move::uci).collect::<Vec<_>>().join(" "),
            prompt: self.prompt.to_string(),
            exact_answer: self.exact_answer.map(|s| s.name()),
            legal_answers: self.legal_answers.iter().map(|s| s.name()).collect(),
            source_id: self.source_id.clone(),
        }
    }

    fn from_line(l: ProbeLine) -> Result<Self, String> {
        let prefix = parse_uci_line(&l.prefix).map_err(|e| e.to_string())?;
        let prompt = if l.task.is_end() {
            Prompt::Square(l.prompt.parse().map_err(|e: crate::chess::ChessError| e.to_string())?)
        } else {
            let mut cs = l.prompt.chars();
            match (cs.next().and_then(PieceType::from_letter), cs.next()) {
                (Some(p), None) => Prompt::Piece(p),
                _ => return Err(format!("bad piece prompt {:?}", l.prompt)),
            }
        };
        let sq = |s: &str| Square::parse(s).ok_or_else(|| format!("bad square {s:?}"));
        let exact_answer = l.exact_answer.as_deref().map(sq).transpose()?;
        let legal_answers = l.legal_answers.iter().map(|s| sq(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(ProbeInstance {
            task: l.task,
            prefix,
            prompt,
            exact_answer,
            legal_answers,
            source_id: l.source_id,
        })
    }
}

fn sorted_by_name(set: impl IntoIterator<Item = Square>) -> Vec<Square> {
    let mut v: Vec<Square> = set.into_iter().collect();
    v.sort_by_key(|s| s.name());
    v
}

/// Oracle answer set for a prompt in `pos`.
fn answers(pos: &Position, prompt: Prompt) -> Vec<Square> {
    match prompt {
        Prompt::Square(s) => sorted_by_name(legal_destinations(pos, s)),
        Prompt::Piece(p) => sorted_by_name(movable_starts(pos, p)),
    }
}

/// Replays the prefix and checks the stored answers against the rules.
pub fn verify_instance(inst: &ProbeInstance) -> Result<(), CorpusError> {
    let bad = |m: String| Err(CorpusError::Inconsistent(format!("{}: {m}", inst.source_id)));
    let pos = match replay(&inst.prefix) {
        Ok(p) => p,
        Err(e) => return bad(e.to_string()),
    };
    match (inst.task.is_end(), inst.prompt) {
        (true, Prompt::Square(_)) | (false, Prompt::Piece(_)) => {}
        _ => return bad("prompt kind does not match the task".into()),
    }
    if let Prompt::Piece(PieceType::Pawn) = inst.prompt {
        return bad("pawn prompt".into());
    }
    if let Prompt::Square(s) = inst.prompt {
        if pos.piece_at(s).is_some_and(|p| p.kind == PieceType::Pawn) {
            return bad("pawn prompt".into());
        }
    }
    let want = answers(&pos, inst.prompt);
    if want.is_empty() || want != inst.legal_answers {
        return bad(format!("legal answers {:?}, rules give {:?}", inst.legal_answers, want));
    }
    match (inst.task.is_actual(), inst.exact_answer) {
        (true, Some(a)) if want.contains(&a) => Ok(()),
        (false, None) => Ok(()),
        _ => bad("exact answer missing or not legal".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Instances per task.
    pub n: usize,
    pub min_prefix: usize,
    pub max_prefix: usize,
    pub unit: LengthUnit,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n: 1000,
            min_prefix: 51,
            max_prefix: 100,
            unit: LengthUnit::Plies,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeSets {
    pub end_actual: Vec<ProbeInstance>,
    pub end_other: Vec<ProbeInstance>,
    pub start_actual: Vec<ProbeInstance>,
    pub start_other: Vec<ProbeInstance>,
}

impl ProbeSets {
    pub fn get(&self, task: ProbeTask) -> &[ProbeInstance] {
        match task {
            ProbeTask::EndActual => &self.end_actual,
            ProbeTask::EndOther => &self.end_other,
            ProbeTask::StartActual => &self.start_actual,
            ProbeTask::StartOther => &self.start_other,
        }
    }

    pub fn get_mut(&mut self, task: ProbeTask) -> &mut Vec<ProbeInstance> {
        match task {
            ProbeTask::EndActual => &mut self.end_actual,
            ProbeTask::EndOther => &mut self.end_other,
            ProbeTask::StartActual => &mut self.start_actual,
            ProbeTask::StartOther => &mut self.start_other,
        }
    }
}

/// Plies allowed for a prefix of length `l` in `unit`: `[lo, hi]`.
fn ply_range(cfg: &ProbeConfig) -> (usize, usize) {
    match cfg.unit {
        LengthUnit::Plies => (cfg.min_prefix, cfg.max_prefix),
        LengthUnit::FullMoves => (2 * cfg.min_prefix, 2 * cfg.max_prefix),
    }
}

/// All four instances for one game, or `None` when the game cannot supply
/// them (too short, pawn mover, prefix seen in training, no alternative).
fn instances_for(game: &GameRecord, rng: &mut ChaCha8Rng, cfg: &ProbeConfig, seen: &PrefixIndex) -> Option<[ProbeInstance; 4]> {
    let (lo, hi) = ply_range(cfg);
    // the prefix must be followed by an actual move
    let hi = hi.min(game.ply_count().checked_sub(1)?);
    if hi < lo {
        return None;
    }
    let l = rng.gen_range(lo..=hi);
    let prefix = &game.moves[..l];
    if seen.contains_prefix(prefix) {
        return None;
    }
    let pos = replay(prefix).ok()?;
    let actual = game.moves[l];
    let mover = pos.piece_at(actual.from)?.kind;
    if mover == PieceType::Pawn {
        return None;
    }
    let legal = pos.legal_moves();
    let mut other_starts: Vec<Square> = legal
        .iter()
        .map(|m| m.from)
        .filter(|&s| s != actual.from && pos.piece_at(s).is_some_and(|p| p.kind != PieceType::Pawn))
        .collect();
    other_starts.sort();
    other_starts.dedup();
    let mut other_kinds: Vec<PieceType> = legal
        .iter()
        .filter_map(|m| pos.piece_at(m.from).map(|p| p.kind))
        .filter(|&k| k != PieceType::Pawn && k != mover)
        .collect();
    other_kinds.sort();
    other_kinds.dedup();
    let other_start = *other_starts.choose(rng)?;
    let other_kind = *other_kinds.choose(rng)?;

    let mk = |task, prompt, exact| ProbeInstance {
        task,
        prefix: prefix.to_vec(),
        prompt,
        exact_answer: exact,
        legal_answers: answers(&pos, prompt),
        source_id: game.source_id.clone(),
    };
    Some([
        mk(ProbeTask::EndActual, Prompt::Square(actual.from), Some(actual.to)),
        mk(ProbeTask::EndOther, Prompt::Square(other_start), None),
        mk(ProbeTask::StartActual, Prompt::Piece(mover), Some(actual.from)),
        mk(ProbeTask::StartOther, Prompt::Piece(other_kind), None),
    ])
}

/// Draws `cfg.n` instances per task from `pool`, one prefix per game shared
/// by all four tasks. Prefixes that occur in `train` are skipped.
pub fn build_probe_sets(pool: &[GameRecord], train: &[GameRecord], cfg: &ProbeConfig) -> Result<ProbeSets, CorpusError> {
    let seen = PrefixIndex::build(train);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut sets = ProbeSets::default();
    for &i in &order {
        if sets.end_actual.len() == cfg.n {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
        if let Some(four) = instances_for(&pool[i], &mut rng, cfg, &seen) {
            for inst in four {
                sets.get_mut(inst.task).push(inst);
            }
        }
    }
    if sets.end_actual.len() < cfg.n {
        return Err(CorpusError::Exhausted {
            task: ProbeTask::EndActual,
            wanted: cfg.n,
            built: sets.end_actual.len(),
            pool: pool.len(),
        });
    }
    Ok(sets)
}

/// Count of prompts per piece type (for End tasks, the piece on the prompt square).
pub fn prompt_piece_histogram(instances: &[ProbeInstance]) -> BTreeMap<PieceType, usize> {
    let mut h = BTreeMap::new();
    for inst in instances {
        let kind = match inst.prompt {
            Prompt::Piece(p) => Some(p),
            Prompt::Square(s) => inst.position().piece_at(s).map(|p| p.kind),
        };
        if let Some(k) = kind {
            *h.entry(k).or_insert(0) += 1;
        }
    }
    h
}

pub fn write_probes<W: Write>(mut out: W, instances: &[ProbeInstance]) -> std::io::Result<()> {
    for inst in instances {
        let line = serde_json::to_string(&inst.to_line()).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn read_probes<R: BufRead>(input: R) -> Result<Vec<ProbeInstance>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt_err = |reason: String| CorpusError::Format { line: i + 1, reason };
        let raw: ProbeLine = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
        out.push(ProbeInstance::from_line(raw).map_err(fmt_err)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_game() -> GameRecord {
        GameRecord::from_uci_line("e2e4 e7e5 g1f3 b8c6 d2d4 h7h6 f1b5", "t2").unwrap()
    }

    #[test]
    fn running_example_instances() {
        let cfg = ProbeConfig {
            n: 1,
            min_prefix: 6,
            max_prefix: 6,
            ..ProbeConfig::default()
        };
        let sets = build_probe_sets(&[example_game()], &[], &cfg).unwrap();
        let ea = &sets.end_actual[0];
        assert_eq!(ea.prompt, Prompt::Square("f1".parse().unwrap()));
        assert_eq!(ea.exact_answer, Some("b5".parse().unwrap()));
        let names: Vec<String> = ea.legal_answers.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["a6", "b5", "c4", "d3", "e2"]);
        let sa = &sets.start_actual[0];
        assert_eq!(sa.prompt, Prompt::Piece(PieceType::Bishop));
        assert_eq!(sa.exact_answer, Some("f1".parse().unwrap()));
        let names: Vec<String> = sa.legal_answers.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["c1", "f1"]);
        assert_ne!(sets.end_other[0].prompt, ea.prompt);
        assert_ne!(sets.start_other[0].prompt, Prompt::Piece(PieceType::Bishop));
        for t in ProbeTask::ALL {
            verify_instance(&sets.get(t)[0]).unwrap();
        }
    }

    #[test]
    fn pawn_mover_and_seen_prefix_are_skipped() {
        let cfg = ProbeConfig {
            n: 1,
            min_prefix: 5,
            max_prefix: 5,
            ..ProbeConfig::default()
        };
        // the move after five plies is h7h6, a pawn move
        assert!(matches!(
            build_probe_sets(&[example_game()], &[], &cfg),
            Err(CorpusError::Exhausted { built: 0, .. })
        ));
        let cfg = ProbeConfig {
            min_prefix: 6,
            max_prefix: 6,
            ..cfg
        };
        assert!(build_probe_sets(&[example_game()], &[example_game()], &cfg).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let cfg = ProbeConfig {
            n: 1,
            min_prefix: 6,
            max_prefix: 6,
            ..ProbeConfig::default()
        };
        let sets = build_probe_sets(&[example_game()], &[], &cfg).unwrap();
        for t in ProbeTask::ALL {
            let mut buf = Vec::new();
            write_probes(&mut buf, sets.get(t)).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.contains("\"legal_answers\""));
            assert_eq!(read_probes(buf.as_slice()).unwrap(), sets.get(t));
        }
        assert!(matches!(
            read_probes("{\"task\":\"EndActual\"}\n".as_bytes()),
            Err(CorpusError::Format { line: 1, .. })
        ));
    }
}
