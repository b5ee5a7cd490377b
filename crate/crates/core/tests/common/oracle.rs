//! A deliberately naive move enumerator that shares no code with the crate.
//! Boards are 64 signed bytes: positive white, negative black,
//! 1 pawn 2 knight 3 bishop 4 rook 5 queen 6 king. Square index is rank*8+file.

#[derive(Clone, Debug)]
pub struct Board {
    sq: [i8; 64],
    white: bool,
    // K Q k q
    castle: [bool; 4],
    ep: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mv {
    pub from: usize,
    pub to: usize,
    pub promo: i8,
}

const KNIGHT: [(i32, i32); 8] = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)];
const KING: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const DIAG: [(i32, i32); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
const ORTH: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn at(f: i32, r: i32) -> Option<usize> {
    ((0..8).contains(&f) && (0..8).contains(&r)).then(|| (r * 8 + f) as usize)
}

fn fr(s: usize) -> (i32, i32) {
    ((s % 8) as i32, (s / 8) as i32)
}

pub fn square_name(s: usize) -> String {
    format!("{}{}", (b'a' + (s % 8) as u8) as char, s / 8 + 1)
}

fn parse_square(s: &str) -> usize {
    let b = s.as_bytes();
    ((b[1] - b'1') * 8 + (b[0] - b'a')) as usize
}

impl Mv {
    pub fn uci(&self) -> String {
        let mut s = square_name(self.from) + &square_name(self.to);
        if self.promo != 0 {
            s.push(['n', 'b', 'r', 'q'][(self.promo - 2) as usize]);
        }
        s
    }
}

impl Board {
    pub fn from_fen(fen: &str) -> Board {
        let parts: Vec<&str> = fen.split_whitespace().collect();
        let mut sq = [0i8; 64];
        for (i, row) in parts[0].split('/').enumerate() {
            let r = 7 - i as i32;
            let mut f = 0;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    f += d as i32;
                    continue;
                }
                let v = match c.to_ascii_lowercase() {
                    'p' => 1,
                    'n' => 2,
                    'b' => 3,
                    'r' => 4,
                    'q' => 5,
                    'k' => 6,
                    _ => panic!("bad fen piece {c}"),
                };
                sq[at(f, r).unwrap()] = if c.is_ascii_uppercase() { v } else { -v };
                f += 1;
            }
        }
        let c = parts[2];
        Board {
            sq,
            white: parts[1] == "w",
            castle: [c.contains('K'), c.contains('Q'), c.contains('k'), c.contains('q')],
            ep: (parts[3] != "-").then(|| parse_square(parts[3])),
        }
    }

    pub fn start() -> Board {
        Board::from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1")
    }

    fn own(&self, v: i8) -> bool {
        if self.white {
            v > 0
        } else {
            v < 0
        }
    }

    /// Is `s` attacked by the side `by_white`?
    fn attacked(&self, s: usize, by_white: bool) -> bool {
        let sign: i8 = if by_white { 1 } else { -1 };
        let (f, r) = fr(s);
        // pawns attack diagonally forward, so look one rank back from the target
        let back = if by_white { -1 } else { 1 };
        for df in [-1, 1] {
            if let Some(t) = at(f + df, r + back) {
                if self.sq[t] == sign {
                    return true;
                }
            }
        }
        for (df, dr) in KNIGHT {
            if let Some(t) = at(f + df, r + dr) {
                if self.sq[t] == 2 * sign {
                    return true;
                }
            }
        }
        for (df, dr) in KING {
            if let Some(t) = at(f + df, r + dr) {
                if self.sq[t] == 6 * sign {
                    return true;
                }
            }
        }
        for (dirs, a, b) in [(DIAG, 3, 5), (ORTH, 4, 5)] {
            for (df, dr) in dirs {
                let (mut x, mut y) = (f + df, r + dr);
                while let Some(t) = at(x, y) {
                    let v = self.sq[t];
                    if v != 0 {
                        if v == a * sign || v == b * sign {
                            return true;
                        }
                        break;
                    }
                    x += df;
                    y += dr;
                }
            }
        }
        false
    }

    fn king(&self, white: bool) -> usize {
        let k = if white { 6 } else { -6 };
        (0..64).find(|&s| self.sq[s] == k).expect("king on board")
    }

    pub fn in_check(&self) -> bool {
        self.attacked(self.king(self.white), !self.white)
    }

    fn pseudo(&self) -> Vec<Mv> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<Mv>, from, to| out.push(Mv { from, to, promo: 0 });
        for s in 0..64 {
            let v = self.sq[s];
            if v == 0 || !self.own(v) {
                continue;
            }
            let (f, r) = fr(s);
            match v.abs() {
                1 => {
                    let dir = if self.white { 1 } else { -1 };
                    let start = if self.white { 1 } else { 6 };
                    let last = if self.white { 7 } else { 0 };
                    let add = |out: &mut Vec<Mv>, to: usize| {
                        if fr(to).1 == last {
                            for p in 2..=5 {
                                out.push(Mv { from: s, to, promo: p });
                            }
                        } else {
                            push(out, s, to);
                        }
                    };
                    if let Some(t) = at(f, r + dir) {
                        if self.sq[t] == 0 {
                            add(&mut out, t);
                            if r == start {
                                let t2 = at(f, r + 2 * dir).unwrap();
                                if self.sq[t2] == 0 {
                                    push(&mut out, s, t2);
                                }
                            }
                        }
                    }
                    for df in [-1, 1] {
                        if let Some(t) = at(f + df, r + dir) {
                            let tv = self.sq[t];
                            if (tv != 0 && !self.own(tv)) || self.ep == Some(t) {
                                add(&mut out, t);
                            }
                        }
                    }
                }
                2 | 6 => {
                    let steps = if v.abs() == 2 { KNIGHT } else { KING };
                    for (df, dr) in steps {
                        if let Some(t) = at(f + df, r + dr) {
                            if !self.own(self.sq[t]) {
                                push(&mut out, s, t);
                            }
                        }
                    }
                }
                k => {
                    let mut dirs = Vec::new();
                    if k == 3 || k == 5 {
                        dirs.extend(DIAG);
                    }
                    if k == 4 || k == 5 {
                        dirs.extend(ORTH);
                    }
                    for (df, dr) in dirs {
                        let (mut x, mut y) = (f + df, r + dr);
                        while let Some(t) = at(x, y) {
                            let tv = self.sq[t];
                            if tv == 0 {
                                push(&mut out, s, t);
                            } else {
                                if !self.own(tv) {
                                    push(&mut out, s, t);
                                }
                                break;
                            }
                            x += df;
                            y += dr;
                        }
                    }
                }
            }
        }
        // castling
        let (rank, ks, qs) = if self.white { (0, 0, 1) } else { (7, 2, 3) };
        let e = rank * 8 + 4;
        let k = if self.white { 6 } else { -6 };
        let rook = if self.white { 4 } else { -4 };
        if self.sq[e] == k && !self.attacked(e, !self.white) {
            if self.castle[ks]
                && self.sq[e + 3] == rook
                && self.sq[e + 1] == 0
                && self.sq[e + 2] == 0
                && !self.attacked(e + 1, !self.white)
                && !self.attacked(e + 2, !self.white)
            {
                push(&mut out, e, e + 2);
            }
            if self.castle[qs]
                && self.sq[e - 4] == rook
                && self.sq[e - 1] == 0
                && self.sq[e - 2] == 0
                && self.sq[e - 3] == 0
                && !self.attacked(e - 1, !self.white)
                && !self.attacked(e - 2, !self.white)
            {
                push(&mut out, e, e - 2);
            }
        }
        out
    }

    pub fn make(&self, m: Mv) -> Board {
        let mut b = self.clone();
        let v = b.sq[m.from];
        b.sq[m.from] = 0;
        if v.abs() == 1 && Some(m.to) == self.ep {
            let cap = if self.white { m.to - 8 } else { m.to + 8 };
            b.sq[cap] = 0;
        }
        b.sq[m.to] = if m.promo != 0 { m.promo * v.signum() } else { v };
        if v.abs() == 6 && (m.from as i32 - m.to as i32).abs() == 2 {
            let (rf, rt) = if m.to > m.from { (m.from + 3, m.from + 1) } else { (m.from - 4, m.from - 1) };
            b.sq[rt] = b.sq[rf];
            b.sq[rf] = 0;
        }
        b.ep = (v.abs() == 1 && (m.from as i32 - m.to as i32).abs() == 16).then(|| (m.from + m.to) / 2);
        for (corner, right) in [(7, 0), (0, 1), (63, 2), (56, 3)] {
            if m.from == corner || m.to == corner {
                b.castle[right] = false;
            }
        }
        if m.from == 4 {
            b.castle[0] = false;
            b.castle[1] = false;
        }
        if m.from == 60 {
            b.castle[2] = false;
            b.castle[3] = false;
        }
        b.white = !self.white;
        b
    }

    pub fn legal(&self) -> Vec<Mv> {
        self.pseudo()
            .into_iter()
            .filter(|&m| {
                let b = self.make(m);
                !b.attacked(b.king(self.white), b.white)
            })
            .collect()
    }

    pub fn perft(&self, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        let moves = self.legal();
        if depth == 1 {
            return moves.len() as u64;
        }
        moves.iter().map(|&m| self.make(m).perft(depth - 1)).sum()
    }
}
