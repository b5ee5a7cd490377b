//! A forgiving PGN reader.
//!
//! Headers, comments (`{...}` and `;` to end of line), variations, NAGs and
//! move-number indications are skipped. Each game's SAN movetext is replayed
//! against the rules; a game whose SAN cannot be resolved is reported as
//! dropped and reading carries on with the next game.

use std::io::BufRead;

use log::warn;

use super::san::san_to_move;
use super::{GameRecord, NotationError};
use crate::chess::Position;

#[derive(Debug, thiserror::Error)]
pub enum PgnError {
    #[error("I/O error reading {source_name}: {err}")]
    Io {
        source_name: String,
        #[source]
        err: std::io::Error,
    },
    #[error("malformed PGN in {source_name} near line {line}: {reason}")]
    Malformed {
        source_name: String,
        line: usize,
        reason: String,
    },
}

/// One game read from a PGN stream.
#[derive(Debug, Clone)]
pub enum PgnItem {
    Game(GameRecord),
    Dropped {
        source_id: String,
        error: NotationError,
    },
}

const RESULTS: [&str; 4] = ["1-0", "0-1", "1/2-1/2", "*"];

#[derive(Default)]
struct Pending {
    movetext: Vec<String>,
    saw_header: bool,
    start_line: usize,
}

impl Pending {
    fn is_empty(&self) -> bool {
        self.movetext.is_empty() && !self.saw_header
    }
}

/// Streams games out of PGN text.
pub struct PgnReader<R> {
    input: R,
    source_name: String,
    line_no: usize,
    games_seen: usize,
    brace_depth: usize,
    paren_depth: usize,
    pending: Pending,
    finished: bool,
}

impl<R: BufRead> PgnReader<R> {
    pub fn new(input: R, source_name: impl Into<String>) -> Self {
        PgnReader {
            input,
            source_name: source_name.into(),
            line_no: 0,
            games_seen: 0,
            brace_depth: 0,
            paren_depth: 0,
            pending: Pending::default(),
            finished: false,
        }
    }

    fn finish_game(&mut self) -> Option<PgnItem> {
        let pending = std::mem::take(&mut self.pending);
        self.paren_depth = 0;
        if pending.movetext.is_empty() {
            return None;
        }
        let source_id = format!("{}#{}", self.source_name, self.games_seen);
        self.games_seen += 1;
        Some(match replay_san(&pending.movetext, &source_id) {
            Ok(g) => PgnItem::Game(g),
            Err(error) => {
                warn!("dropping game {source_id} (line {}): {error}", pending.start_line);
                PgnItem::Dropped { source_id, error }
            }
        })
    }

    /// Scans one line of movetext. Returns true when a result token closed the game.
    fn scan_movetext(&mut self, line: &str) -> bool {
        let mut word = String::new();
        let mut closed = false;
        let chars = line.chars();
        let flush = |word: &mut String, this: &mut Self, closed: &mut bool| {
            if word.is_empty() {
                return;
            }
            let w = std::mem::take(word);
            if this.paren_depth > 0 {
                return;
            }
            if RESULTS.contains(&w.as_str()) {
                *closed = true;
                return;
            }
            if w.starts_with('$') {
                return;
            }
            // move numbers, possibly glued to the move: "12.", "12...", "1.e4"
            let rest = w.trim_start_matches(|c: char| c.is_ascii_digit());
            let rest = if rest.len() < w.len() && rest.starts_with('.') {
                rest.trim_start_matches('.')
            } else if rest.is_empty() {
                ""
            } else {
                w.as_str()
            };
            if !rest.is_empty() {
                if this.pending.movetext.is_empty() && !this.pending.saw_header {
                    this.pending.start_line = this.line_no;
                }
                this.pending.movetext.push(rest.to_string());
            }
        };
        for c in chars {
            if closed {
                break;
            }
            if self.brace_depth > 0 {
                if c == '}' {
                    self.brace_depth = 0;
                }
                continue;
            }
            match c {
                '{' => {
                    flush(&mut word, self, &mut closed);
                    self.brace_depth = 1;
                }
                ';' => {
                    flush(&mut word, self, &mut closed);
                    break;
                }
                '(' => {
                    flush(&mut word, self, &mut closed);
                    self.paren_depth += 1;
                }
                ')' => {
                    flush(&mut word, self, &mut closed);
                    self.paren_depth = self.paren_depth.saturating_sub(1);
                }
                c if c.is_whitespace() => flush(&mut word, self, &mut closed),
                c => word.push(c),
            }
        }
        if !closed {
            flush(&mut word, self, &mut closed);
        }
        closed
    }
}

impl<R: BufRead> Iterator for PgnReader<R> {
    type Item = Result<PgnItem, PgnError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = match self.input.read_until(b'\n', &mut buf) {
                Ok(n) => n,
                Err(err) => {
                    self.finished = true;
                    return Some(Err(PgnError::Io {
                        source_name: self.source_name.clone(),
                        err,
                    }));
                }
            };
            if n == 0 {
                self.finished = true;
                if self.brace_depth > 0 {
                    return Some(Err(PgnError::Malformed {
                        source_name: self.source_name.clone(),
                        line: self.line_no,
                        reason: "unterminated comment at end of input".into(),
                    }));
                }
                return self.finish_game().map(Ok);
            }
            self.line_no += 1;
            let line = match std::str::from_utf8(&buf) {
                Ok(s) => s.trim_end_matches(['\n', '\r']).trim_start_matches('\u{feff}'),
                Err(_) => {
                    self.finished = true;
                    return Some(Err(PgnError::Malformed {
                        source_name: self.source_name.clone(),
                        line: self.line_no,
                        reason: "invalid UTF-8".into(),
                    }));
                }
            };
            let line = line.to_string();
            let trimmed = line.trim_start();
            if self.brace_depth == 0 && trimmed.starts_with('[') {
                // a header after movetext starts a new game
                let item = if self.pending.movetext.is_empty() {
                    None
                } else {
                    self.finish_game()
                };
                if self.pending.is_empty() {
                    self.pending.start_line = self.line_no;
                }
                self.pending.saw_header = true;
                if let Some(it) = item {
                    return Some(Ok(it));
                }
                continue;
            }
            if self.brace_depth == 0 && trimmed.starts_with('%') {
                continue;
            }
            if self.scan_movetext(&line) {
                if let Some(it) = self.finish_game() {
                    return Some(Ok(it));
                }
            }
        }
    }
}

fn replay_san(tokens: &[String], source_id: &str) -> Result<GameRecord, NotationError> {
    let mut pos = Position::initial();
    let mut moves = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let mv = san_to_move(&pos, tok)?;
        pos = pos.apply(mv).map_err(|e| NotationError::IllegalMove {
            ply: moves.len(),
            source: e,
        })?;
        moves.push(mv);
    }
    Ok(GameRecord::new(moves, source_id))
}

/// Summary of reading a PGN source completely.
#[derive(Debug, Default, Clone)]
pub struct PgnParse {
    pub games: Vec<GameRecord>,
    pub dropped: Vec<(String, NotationError)>,
}

/// Reads every game from `input`. Stream-level failures abort, but the
/// games read before the failure are returned alongside the error.
pub fn parse_pgn<R: BufRead>(input: R, source_name: &str) -> (PgnParse, Option<PgnError>) {
    let mut out = PgnParse::default();
    for item in PgnReader::new(input, source_name) {
        match item {
            Ok(PgnItem::Game(g)) => out.games.push(g),
            Ok(PgnItem::Dropped { source_id, error }) => out.dropped.push((source_id, error)),
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> (PgnParse, Option<PgnError>) {
        parse_pgn(text.as_bytes(), "mem")
    }

    fn uci(g: &GameRecord) -> String {
        g.uci_line()
    }

    #[test]
    fn movetext_to_uci() {
        let (p, err) = parse("1. e4 e5 2. Nf3 *");
        assert!(err.is_none());
        assert_eq!(uci(&p.games[0]), "e2e4 e7e5 g1f3");
    }

    #[test]
    fn comments_variations_nags_skipped() {
        let (p, _) = parse("1. e4 {best} e5 (1... c5 2. Nf3) 2. Nf3! $1 ; trailing\n Nc6?! 1-0");
        assert_eq!(uci(&p.games[0]), "e2e4 e7e5 g1f3 b8c6");
        let (p, _) = parse("1. e4 {best} e5");
        assert_eq!(p.games[0].ply_count(), 2);
    }

    #[test]
    fn bad_san_drops_game_and_continues() {
        let text = "[Event \"a\"]\n\n1. e9 e5 1-0\n\n[Event \"b\"]\n\n1. d4 d5 0-1\n";
        let (p, err) = parse(text);
        assert!(err.is_none());
        assert_eq!(p.dropped.len(), 1);
        assert_eq!(p.games.len(), 1);
        assert_eq!(uci(&p.games[0]), "d2d4 d7d5");
        assert_eq!(p.games[0].source_id, "mem#1");
    }

    #[test]
    fn multi_game_crlf_and_headers() {
        let text = "[White \"x\"]\r\n[Black \"y\"]\r\n\r\n1.e4 c5 2.Nf3\r\n1/2-1/2\r\n[White \"z\"]\r\n1. d4 Nf6 *\r\n";
        let (p, err) = parse(text);
        assert!(err.is_none());
        assert_eq!(p.games.len(), 2);
        assert_eq!(uci(&p.games[0]), "e2e4 c7c5 g1f3");
        assert_eq!(uci(&p.games[1]), "d2d4 g8f6");
    }

    #[test]
    fn game_without_result_at_eof() {
        let (p, _) = parse("1. e4 e5 2. Bc4");
        assert_eq!(uci(&p.games[0]), "e2e4 e7e5 f1c4");
    }

    #[test]
    fn stream_errors() {
        let (p, err) = parse("1. e4 e5 1-0\n1. d4 {never closed");
        assert_eq!(p.games.len(), 1);
        assert!(matches!(err, Some(PgnError::Malformed { .. })));
        let bytes: &[u8] = b"1. e4 e5 1-0\n\xff\xfe";
        let (p, err) = parse_pgn(bytes, "bin");
        assert_eq!(p.games.len(), 1);
        assert!(matches!(err, Some(PgnError::Malformed { .. })));
    }

    #[test]
    fn multiline_comment() {
        let (p, err) = parse("1. e4 {a long\ncomment spanning} e5 *");
        assert!(err.is_none());
        assert_eq!(uci(&p.games[0]), "e2e4 e7e5");
    }
}
