//! ASCII grid maps.
//!
//! A map is UTF-8 text with one row per line using `#` (wall), `.` (empty),
//! `L` (low reward), `G` (goal) and `S` (start). Optional header lines of
//! the form `!reward empty=-1 low=-20 goal=0` override the default rewards.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Reward, TabularMdp};
use crate::error::{Error, Result};

/// Action names in index order.
pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Empty,
    Low,
    Goal,
    Start,
}

impl Cell {
    fn from_char(c: char) -> Option<Self> {
        Some(match c {
            '#' => Cell::Wall,
            '.' => Cell::Empty,
            'L' => Cell::Low,
            'G' => Cell::Goal,
            'S' => Cell::Start,
            _ => return None,
        })
    }

    fn to_char(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Empty => '.',
            Cell::Low => 'L',
            Cell::Goal => 'G',
            Cell::Start => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub empty: f64,
    pub low: f64,
    pub goal: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            empty: -1.0,
            low: -20.0,
            goal: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    rewards: RewardSpec,
}

/// Geometry attached to MDPs built from grid maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `(row, col)` of every state.
    pub coords: Vec<(usize, usize)>,
    /// Cell kind of every state.
    pub kinds: Vec<Cell>,
}

impl GridLayout {
    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.coords.iter().position(|&c| c == (row, col))
    }
}

impl GridMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rewards = RewardSpec::default();
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(header) = line.strip_prefix('!') {
                if !rows.is_empty() {
                    return Err(parse_error(line_no, 1, "header lines must precede the grid"));
                }
                parse_header(header, line_no, &mut rewards)?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for (col, c) in line.chars().enumerate() {
                let cell = Cell::from_char(c)
                    .ok_or_else(|| parse_error(line_no, col + 1, &format!("unknown character {c:?}")))?;
                row.push(cell);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(parse_error(
                        line_no,
                        row.len().min(first.len()) + 1,
                        &format!("row has {} cells, expected {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(parse_error(1, 1, "map has no rows"));
        }
        let map = GridMap {
            width: rows[0].len(),
            height: rows.len(),
            cells: rows.into_iter().flatten().collect(),
            rewards,
        };
        if !map.cells.contains(&Cell::Start) {
            return Err(parse_error(map.height, 1, "map has no start cell"));
        }
        map.check_reachable()?;
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rewards(&self) -> RewardSpec {
        self.rewards
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    /// Replaces every cell of kind `from` with `to`.
    pub fn replace(&self, from: Cell, to: Cell) -> Self {
        let mut out = self.clone();
        for c in &mut out.cells {
            if *c == from {
                *c = to;
            }
        }
        out
    }

    pub fn count(&self, kind: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    /// Text form accepted by [`GridMap::parse`], always with a reward header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let r = self.rewards;
        let _ = writeln!(out, "!reward empty={} low={} goal={}", r.empty, r.low, r.goal);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|c| c.to_char()));
            out.push('\n');
        }
        out
    }

    fn open_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| self.cell(r, c) != Cell::Wall)
            .collect()
    }

    fn step(&self, (row, col): (usize, usize), action: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (row as isize + dr, col as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return (row, col);
        }
        let (nr, nc) = (nr as usize, nc as usize);
        if self.cell(nr, nc) == Cell::Wall {
            (row, col)
        } else {
            (nr, nc)
        }
    }

    fn check_reachable(&self) -> Result<()> {
        let mut seen = vec![false; self.cells.len()];
        let mut queue: VecDeque<(usize, usize)> = self
            .open_cells()
            .into_iter()
            .filter(|&(r, c)| self.cell(r, c) == Cell::Start)
            .collect();
        for &(r, c) in &queue {
            seen[r * self.width + c] = true;
        }
        while let Some(pos) = queue.pop_front() {
            if self.cell(pos.0, pos.1) == Cell::Goal {
                continue;
            }
            for a in 0..MOVES.len() {
                let next = self.step(pos, a);
                let idx = next.0 * self.width + next.1;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(next);
                }
            }
        }
        match self.open_cells().into_iter().find(|&(r, c)| !seen[r * self.width + c]) {
            Some((r, c)) => Err(parse_error(r + 1, c + 1, "cell is unreachable from the start")),
            None => Ok(()),
        }
    }

    /// Deterministic four-action MDP over the open cells in row-major order.
    pub fn to_mdp(&self) -> TabularMdp {
        let open = self.open_cells();
        let n = open.len();
        let index_of = |pos: (usize, usize)| open.binary_search(&pos).expect("open cell");
        let mut transition = vec![0.0; n * 4 * n];
        let mut reward = Vec::with_capacity(n);
        let mut terminal = Vec::with_capacity(n);
        let mut kinds = Vec::with_capacity(n);
        for (s, &pos) in open.iter().enumerate() {
            let kind = self.cell(pos.0, pos.1);
            kinds.push(kind);
            terminal.push(kind == Cell::Goal);
            reward.push(match kind {
                Cell::Low => self.rewards.low,
                Cell::Goal => self.rewards.goal,
                _ => self.rewards.empty,
            });
            for a in 0..4 {
                let next = if kind == Cell::Goal { pos } else { self.step(pos, a) };
                transition[(s * 4 + a) * n + index_of(next)] = 1.0;
            }
        }
        let starts = kinds.iter().filter(|&&k| k == Cell::Start).count() as f64;
        let start = kinds
            .iter()
            .map(|&k| if k == Cell::Start { 1.0 / starts } else { 0.0 })
            .collect();
        let layout = GridLayout {
            width: self.width,
            height: self.height,
            coords: open,
            kinds,
        };
        TabularMdp::new(n, 4, transition, Reward::State(reward), terminal, start)
            .expect("grid maps produce valid MDPs")
            .with_layout(layout)
    }
}

fn parse_header(header: &str, line: usize, rewards: &mut RewardSpec) -> Result<()> {
    let mut parts = header.split_whitespace();
    match parts.next() {
        Some("reward") => {}
        other => {
            return Err(parse_error(line, 2, &format!("unknown header directive {other:?}")));
        }
    }
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_error(line, 2, &format!("malformed header entry {part:?}")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| parse_error(line, 2, &format!("bad number in {part:?}")))?;
        match key {
            "empty" => rewards.empty = value,
            "low" => rewards.low = value,
            "goal" => rewards.goal = value,
            _ => return Err(parse_error(line, 2, &format!("unknown reward key {key:?}"))),
        }
    }
    Ok(())
}

fn parse_error(line: usize, column: usize, message: &str) -> Error {
    Error::MapParse {
        line,
        column,
        message: message.to_string(),
    }
}
