//! Grid snapshots: plain PGM for figures and a run-length JSON dump.

use super::{CellState, GridBounds, GridError, OccupancyGrid, Point2};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One run of identical cells in row-major order. `state` is `U`, `F` or `O`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleRun(pub char, pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDump {
    pub version: u32,
    pub origin: Point2,
    pub resolution: f64,
    pub bounds: GridBounds,
    pub cells: Vec<RleRun>,
}

fn state_char(s: CellState) -> char {
    match s {
        CellState::Unknown => 'U',
        CellState::Free => 'F',
        CellState::Obstacle => 'O',
    }
}

impl OccupancyGrid {
    /// Plain-text (P2) graymap: Unknown 128, Free 255, Obstacle 0. The top
    /// image row is the highest grid row so +y points up.
    pub fn to_pgm(&self) -> String {
        let b = self.bounds();
        let mut s = String::new();
        let _ = writeln!(s, "P2\n{} {}\n255", b.width, b.height);
        for r in (0..b.height).rev() {
            let row = &self.raw_cells()[r * b.width..(r + 1) * b.width];
            let line: Vec<&str> = row
                .iter()
                .map(|c| match c {
                    CellState::Unknown => "128",
                    CellState::Free => "255",
                    CellState::Obstacle => "0",
                })
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn to_dump(&self) -> GridDump {
        let mut runs: Vec<RleRun> = Vec::new();
        for s in self.raw_cells() {
            let ch = state_char(*s);
            match runs.last_mut() {
                Some(RleRun(c, n)) if *c == ch => *n += 1,
                _ => runs.push(RleRun(ch, 1)),
            }
        }
        GridDump {
            version: 1,
            origin: self.origin(),
            resolution: self.resolution(),
            bounds: self.bounds(),
            cells: runs,
        }
    }

    pub fn from_dump(dump: &GridDump) -> Result<Self, GridError> {
        let b = dump.bounds;
        let mut states = Vec::with_capacity(b.len());
        for RleRun(c, n) in &dump.cells {
            let s = match c {
                'U' => CellState::Unknown,
                'F' => CellState::Free,
                'O' => CellState::Obstacle,
                other => return Err(GridError::MalformedDump(format!("unknown state {other:?}"))),
            };
            states.extend(std::iter::repeat_n(s, *n));
        }
        if states.len() != b.len() {
            return Err(GridError::MalformedDump(format!(
                "{} cells for a {}x{} grid",
                states.len(),
                b.width,
                b.height
            )));
        }
        OccupancyGrid::from_parts(dump.origin, dump.resolution, b, states)
    }
}
